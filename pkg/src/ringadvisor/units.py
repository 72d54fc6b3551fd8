"""Unit conversions. Internal math is SI; mph appears only at display/wire edges."""

MPS_PER_MPH = 0.44704  # exact by definition (1609.344 m per mile / 3600 s)


def mph_to_mps(mph: float) -> float:
    return mph * MPS_PER_MPH


def mps_to_mph(mps: float) -> float:
    return mps / MPS_PER_MPH

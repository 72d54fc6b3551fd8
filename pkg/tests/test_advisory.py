import json
import math

import numpy as np
import pytest

from ringadvisor.advisory import (
    ACCEL_CMD_BOUND,
    Advice,
    AdviceMode,
    AdviceSettings,
    ConstantSpeedPolicy,
    EquilibriumHeuristicPolicy,
    LinearPolicy,
    MissingAdviceError,
    MlpPolicy,
    Observation,
    ObservationScaling,
    PolicyFileError,
    accel_to_speed_advice,
    advise,
    episode_reward,
    in_range,
    load_policy,
    mlp_weight_count,
    observe,
    policy_from_doc,
    policy_to_doc,
    save_policy,
)
from ringadvisor.ring import DEFAULT_IDM, RingConfig, equilibrium_speed, ring_gap, spawn_ring
from ringadvisor.units import mph_to_mps

OBS = Observation(ego_speed_mps=3.0, lead_speed_mps=4.5, lead_gap_m=6.0,
                  circumference_m=250.0)


class TestObserve:
    def test_fields_from_spawn(self):
        cfg = RingConfig()
        st = spawn_ring(cfg)
        obs = observe(st)
        v_eq = equilibrium_speed(DEFAULT_IDM, cfg)
        assert obs.ego_speed_mps == v_eq
        assert obs.lead_speed_mps == v_eq
        assert obs.lead_gap_m == pytest.approx(250 / 22 - 5)
        assert obs.circumference_m == 250.0

    def test_gap_agrees_with_ring_gap_on_positions(self):
        cfg = RingConfig(seed=9)
        from ringadvisor.ring import step
        st = spawn_ring(cfg)
        for _ in range(100):
            st = step(st, cfg, DEFAULT_IDM, None)
        pos = st.positions
        via_positions = ring_gap(pos[1], pos[0], cfg.vehicle_length_m,
                                 cfg.circumference_m)
        assert observe(st).lead_gap_m == pytest.approx(via_positions, abs=1e-9)


class TestAdviseSchedule:
    def test_fresh_on_refresh_ticks_held_between(self):
        settings = AdviceSettings(hold_delta=50)
        pol = ConstantSpeedPolicy(4.0)
        first = advise(pol, OBS, 1200, settings)
        assert first.issued_tick == 1200
        held = first
        for t in range(1201, 1250):
            held = advise(pol, OBS, t, settings, prev=held)
            assert held is first  # same object, bit-identical target
        nxt = advise(pol, OBS, 1250, settings, prev=held)
        assert nxt is not first
        assert nxt.issued_tick == 1250

    def test_delta_one_refreshes_every_tick(self):
        settings = AdviceSettings(hold_delta=1)
        pol = ConstantSpeedPolicy(4.0)
        a = advise(pol, OBS, 7, settings)
        b = advise(pol, OBS, 8, settings, prev=a)
        assert b is not a and b.issued_tick == 8

    def test_holding_without_prev_raises(self):
        settings = AdviceSettings(hold_delta=50)
        with pytest.raises(MissingAdviceError):
            advise(ConstantSpeedPolicy(4.0), OBS, 1201, settings)

    def test_settings_validation(self):
        with pytest.raises(ValueError):
            AdviceSettings(hold_delta=0)
        with pytest.raises(ValueError):
            AdviceSettings(range_halfwidth=-1.0)


class TestClamps:
    def test_speed_advice_clamps_to_cap(self):
        settings = AdviceSettings(hold_delta=1, speed_cap_mps=45.0)
        a = advise(ConstantSpeedPolicy(100.0), OBS, 0, settings)
        assert a.target == 45.0
        b = advise(ConstantSpeedPolicy(-3.0), OBS, 0, settings)
        assert b.target == 0.0

    def test_accel_advice_clamps_symmetric(self):
        settings = AdviceSettings(mode=AdviceMode.ACCEL, hold_delta=1,
                                  range_halfwidth=0.5)
        hot = LinearPolicy((0, 0, 0, 0, 10.0))
        cold = LinearPolicy((0, 0, 0, 0, -10.0))
        assert advise(hot, OBS, 0, settings).target == ACCEL_CMD_BOUND
        assert advise(cold, OBS, 0, settings).target == -ACCEL_CMD_BOUND

    def test_non_finite_policy_output_rejected(self):
        settings = AdviceSettings(hold_delta=1)
        with pytest.raises(ValueError):
            advise(ConstantSpeedPolicy(float("inf")), OBS, 0, settings)


class TestInRange:
    def test_display_band_in_mph_terms(self):
        # 17 mph advisory with a 5 mph band: 20 mph complies, 10 mph does not
        adv = Advice(AdviceMode.SPEED, mph_to_mps(17), mph_to_mps(5), 0, 50)
        assert in_range(adv, mph_to_mps(20))
        assert not in_range(adv, mph_to_mps(10))

    def test_band_is_inclusive(self):
        adv = Advice(AdviceMode.SPEED, 7.0, 2.0, 0, 1)
        assert in_range(adv, 9.0)
        assert in_range(adv, 5.0)
        assert not in_range(adv, 9.000001)

    def test_accel_mode_band(self):
        adv = Advice(AdviceMode.ACCEL, 1.0, 0.25, 0, 1)
        assert in_range(adv, 1.2)
        assert not in_range(adv, 0.5)


class TestAccelToSpeed:
    def test_integrates_over_hold_window(self):
        adv = Advice(AdviceMode.ACCEL, 1.0, 0.5, 100, 10)
        out = accel_to_speed_advice(adv, ego_speed_mps=5.0, delta=10, dt_s=0.1)
        assert out.mode is AdviceMode.SPEED
        assert out.target == pytest.approx(6.0)
        assert out.range_halfwidth == pytest.approx(0.5)
        assert out.issued_tick == 100 and out.hold_delta == 10

    def test_floors_at_zero_speed(self):
        adv = Advice(AdviceMode.ACCEL, -3.0, 0.5, 0, 10)
        out = accel_to_speed_advice(adv, ego_speed_mps=0.1, delta=10, dt_s=0.1)
        assert out.target == 0.0

    def test_rejects_speed_mode_input(self):
        adv = Advice(AdviceMode.SPEED, 4.0, 1.0, 0, 1)
        with pytest.raises(ValueError):
            accel_to_speed_advice(adv, 1.0, 10, 0.1)


class TestPolicies:
    def test_constant(self):
        assert ConstantSpeedPolicy(4.2).evaluate(OBS) == 4.2

    def test_equilibrium_heuristic_for_ring(self):
        pol = EquilibriumHeuristicPolicy.for_ring(DEFAULT_IDM, RingConfig(),
                                                  margin_mps=0.3)
        v_eq = equilibrium_speed(DEFAULT_IDM, RingConfig())
        assert pol.evaluate(OBS) == pytest.approx(v_eq - 0.3)
        floored = EquilibriumHeuristicPolicy(2.0, margin_mps=5.0)
        assert floored.evaluate(OBS) == 0.0

    def test_linear_matches_hand_expansion(self):
        pol = LinearPolicy((1.0, -1.0, 2.0, 0.5, 0.3),
                           ObservationScaling(30.0, 250.0))
        want = (1.0 * (3.0 / 30) - 1.0 * (4.5 / 30) + 2.0 * (6.0 / 250)
                + 0.5 * (250.0 / 250) + 0.3)
        assert pol.evaluate(OBS) == pytest.approx(want, abs=1e-15)

    def test_linear_needs_five_weights(self):
        with pytest.raises(ValueError):
            LinearPolicy((1.0, 2.0))

    def test_mlp_matches_hand_forward(self):
        sizes = (4, 6, 1)
        rng = np.random.default_rng(17)
        flat = rng.normal(size=mlp_weight_count(sizes))
        pol = MlpPolicy(sizes, tuple(flat))
        x = ObservationScaling().normalize(OBS)
        w1 = flat[:24].reshape(4, 6)
        b1 = flat[24:30]
        w2 = flat[30:36].reshape(6, 1)
        b2 = flat[36:]
        want = float((np.tanh(x @ w1 + b1) @ w2 + b2)[0])
        assert pol.evaluate(OBS) == pytest.approx(want, abs=1e-12)

    def test_mlp_shape_validation(self):
        with pytest.raises(ValueError):
            MlpPolicy((4, 6, 2), tuple(np.zeros(mlp_weight_count((4, 6, 2)))))
        with pytest.raises(ValueError):
            MlpPolicy((4, 6, 1), tuple(np.zeros(3)))

    def test_parameter_round_trip(self):
        for pol in (ConstantSpeedPolicy(4.0),
                    EquilibriumHeuristicPolicy(4.36, 0.2),
                    LinearPolicy((1, 2, 3, 4, 5.0)),
                    MlpPolicy((4, 3, 1), tuple(np.arange(19.0)))):
            vec = pol.parameter_vector()
            clone = pol.with_parameters(vec + 1.0)
            assert np.allclose(clone.parameter_vector(), vec + 1.0)
            with pytest.raises(ValueError):
                pol.with_parameters(np.zeros(len(vec) + 1))


class TestPolicyFiles:
    @pytest.mark.parametrize("pol", [
        ConstantSpeedPolicy(4.3),
        EquilibriumHeuristicPolicy(4.3622, 0.25),
        LinearPolicy((0.1, -0.2, 0.3, 0.4, 2.0), ObservationScaling(25.0, 200.0)),
        MlpPolicy((4, 5, 1), tuple(np.linspace(-1, 1, mlp_weight_count((4, 5, 1))))),
    ])
    def test_save_load_round_trip(self, pol, tmp_path):
        path = tmp_path / "policy.json"
        save_policy(path, pol, seed=13)
        loaded, meta = load_policy(path)
        assert type(loaded) is type(pol)
        assert meta["seed"] == 13
        assert meta["kind"] == pol.kind
        assert "trained_at" in meta
        assert loaded.evaluate(OBS) == pytest.approx(pol.evaluate(OBS), abs=1e-15)

    def test_weight_count_mismatch_rejected(self):
        doc = policy_to_doc(LinearPolicy((1, 2, 3, 4, 5.0)))
        doc["weights"] = doc["weights"][:-1]
        with pytest.raises(PolicyFileError):
            policy_from_doc(doc)

    def test_mlp_shape_weight_mismatch_rejected(self):
        doc = policy_to_doc(MlpPolicy((4, 3, 1), tuple(np.zeros(19))))
        doc["shape"] = [4, 8, 1]
        with pytest.raises(PolicyFileError):
            policy_from_doc(doc)

    def test_unknown_kind_rejected(self):
        doc = policy_to_doc(ConstantSpeedPolicy(4.0))
        doc["kind"] = "transformer"
        with pytest.raises(PolicyFileError):
            policy_from_doc(doc)

    def test_non_finite_weight_rejected(self):
        doc = policy_to_doc(ConstantSpeedPolicy(4.0))
        doc["weights"] = [math.nan]
        with pytest.raises(PolicyFileError):
            policy_from_doc(doc)

    def test_invalid_json_rejected(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(PolicyFileError):
            load_policy(path)

    def test_missing_keys_rejected(self):
        with pytest.raises(PolicyFileError):
            policy_from_doc({"kind": "linear"})


class TestEpisodeReward:
    def test_post_warmup_mean(self):
        assert episode_reward([0.0, 0.0, 2.0, 4.0], 2) == 3.0

    def test_zero_warmup_uses_everything(self):
        assert episode_reward([1.0, 2.0, 3.0], 0) == 2.0

    def test_short_trace_raises(self):
        with pytest.raises(ValueError):
            episode_reward([1.0, 2.0], 2)


class TestAdviceDoc:
    def test_round_trip(self):
        adv = Advice(AdviceMode.ACCEL, -1.25, 0.5, 1200, 50)
        assert Advice.from_doc(adv.to_doc()) == adv
        blob = json.dumps(adv.to_doc())
        assert Advice.from_doc(json.loads(blob)) == adv

import inspect

import numpy as np
import pytest

from psba import protocol as pr
from psba import quantum as q
from psba.optics import AnalyzerConfig, Setup
from psba.protocol import PhysicsMode, PoolExhausted, SingleUseError
from psba.quantum import BellKind, MeasurementKind
from psba.rng import Streams
from psba.stats import binomial_error_bound

BS = AnalyzerConfig()
PAPER = PhysicsMode.PAPER_IDEALIZED
PHYSICAL = PhysicsMode.PHYSICAL
RULE = pr.calibrate_rc(0.99)[1]


def one_bit(bit, r_c, mode, seed=0, analyzer=BS):
    streams = Streams(seed)
    pool = pr.provision_scg_pool(1, r_c)
    pr.encode_bit(bit, pool.next_for_alice(), streams)
    return pr.decode_bit(pool.next_for_bob(), analyzer, RULE, mode, streams)


class TestPool:
    def test_layout(self):
        pool = pr.provision_scg_pool(3, 4)
        assert len(pool) == 3
        assert [eg.index for eg in pool.scgs[2].egs] == [8, 9, 10, 11]
        assert all(scg.r_c == 4 for scg in pool.scgs)

    def test_fresh_reduced_states(self):
        pool = pr.provision_scg_pool(1, 2)
        eg = pool.scgs[0].egs[0]
        assert eg.bob_pair().allclose(q.maximally_mixed((1, 4)))
        assert q.partial_trace(eg.state, (2, 3)).allclose(q.maximally_mixed((2, 3)))
        assert q.partial_trace(eg.state, (1, 2)).allclose(q.bell_state(BellKind.PSI_MINUS, (1, 2)))

    def test_start_offset(self):
        pool = pr.provision_scg_pool(2, 5, start=10)
        assert [s.index for s in pool.scgs] == [10, 11]
        assert pool.scgs[0].egs[0].index == 50

    @pytest.mark.parametrize("n,r", [(0, 5), (5, 0)])
    def test_rejects_empty(self, n, r):
        with pytest.raises(ValueError):
            pr.provision_scg_pool(n, r)

    def test_rejects_oversized(self):
        with pytest.raises(ValueError):
            pr.provision_scg_pool(pr.MAX_POOL_EGS // 10 + 1, 10)

    def test_noncontiguous_scg(self):
        pool = pr.provision_scg_pool(1, 3)
        egs = pool.scgs[0].egs
        with pytest.raises(ValueError):
            pr.StatisticalCorrectionGroup(0, [egs[0], egs[2]])

    def test_empty_pool_exhausts(self):
        pool = pr.SCGPool([], 1)
        with pytest.raises(PoolExhausted):
            pool.next_for_alice()
        with pytest.raises(PoolExhausted):
            pool.next_for_bob()


class TestEncode:
    def test_bsm_records(self):
        pool = pr.provision_scg_pool(1, 100)
        records = pr.encode_bit(1, pool.scgs[0], Streams(1))
        assert len(records) == 100
        assert all(r.kind is MeasurementKind.BSM and r.targets == (2, 3) for r in records)
        assert [r.sequence for r in records] == [2 * i for i in range(100)]

    def test_ssm_records(self):
        pool = pr.provision_scg_pool(1, 100)
        records = pr.encode_bit(0, pool.scgs[0], Streams(1))
        assert len(records) == 200
        assert all(r.kind is MeasurementKind.SSM and len(r.targets) == 1 for r in records)
        assert sorted(r.sequence for r in records) == list(range(200))

    def test_bsm_leaves_bell_pairs(self):
        pool = pr.provision_scg_pool(1, 20)
        records = pr.encode_bit(1, pool.scgs[0], Streams(2))
        for eg, rec in zip(pool.scgs[0].egs, records):
            assert q.identify_bell(eg.bob_pair()) is rec.outcome

    def test_ssm_leaves_product_pairs(self):
        pool = pr.provision_scg_pool(1, 20)
        pr.encode_bit(0, pool.scgs[0], Streams(2))
        for eg in pool.scgs[0].egs:
            assert q.is_separable(eg.bob_pair())
            assert eg.bob_pair().purity() == pytest.approx(1.0)

    def test_single_use(self):
        pool = pr.provision_scg_pool(1, 3)
        scg = pool.scgs[0]
        pr.encode_bit(1, scg, Streams(0))
        with pytest.raises(SingleUseError):
            pr.encode_bit(0, scg, Streams(0))

    def test_single_use_after_analysis(self):
        pool = pr.provision_scg_pool(1, 3)
        scg = pool.scgs[0]
        pr.decode_bit(scg, BS, RULE, PAPER, Streams(0))
        with pytest.raises(SingleUseError):
            pr.encode_bit(1, scg, Streams(0))
        with pytest.raises(SingleUseError):
            pr.decode_bit(scg, BS, RULE, PAPER, Streams(0))

    def test_single_use_per_eg(self):
        pool = pr.provision_scg_pool(2, 3)
        pool.scgs[1].egs[1].consumed = True
        with pytest.raises(SingleUseError):
            pr.encode_bit(1, pool.scgs[1], Streams(0))

    def test_bad_bit(self):
        with pytest.raises(ValueError):
            pr.encode_bit(2, pr.provision_scg_pool(1, 1).scgs[0], Streams(0))

    def test_deterministic(self):
        outs = []
        for _ in range(2):
            pool = pr.provision_scg_pool(1, 50)
            outs.append([r.outcome for r in pr.encode_bit(1, pool.scgs[0], Streams(9))])
        assert outs[0] == outs[1]


class TestDecode:
    def test_idealized_bit_one(self):
        d = one_bit(1, 10_000, PAPER, seed=3)
        assert abs(d.fraction - 0.25) < 0.02
        assert d.bit == 1

    def test_idealized_bit_zero(self):
        d = one_bit(0, 10_000, PAPER, seed=3)
        assert abs(d.fraction - 0.5) < 0.02
        assert d.bit == 0

    @pytest.mark.parametrize("bit", [0, 1])
    def test_physical_both_quarter(self, bit):
        d = one_bit(bit, 10_000, PHYSICAL, seed=3)
        assert abs(d.fraction - 0.25) < 0.02
        assert d.bit == 1

    def test_untouched_scg(self):
        # I/4 on photons 1&4 is separable: the idealized mode reads 0, physics reads 1
        pool = pr.provision_scg_pool(2, 10_000)
        d_paper = pr.decode_bit(pool.scgs[0], BS, RULE, PAPER, Streams(0))
        d_phys = pr.decode_bit(pool.scgs[1], BS, RULE, PHYSICAL, Streams(0))
        assert abs(d_paper.fraction - 0.5) < 0.02
        assert abs(d_phys.fraction - 0.25) < 0.02

    def test_counts_and_ci(self):
        d = one_bit(1, 400, PAPER)
        assert d.n_diff + d.n_same == 400
        lo, hi = d.ci_95()
        assert lo <= d.fraction <= hi

    def test_pbs_setup_rejected(self):
        with pytest.raises(ValueError):
            one_bit(1, 5, PAPER, analyzer=AnalyzerConfig(Setup.BIREFRINGENT_PBS))

    def test_idealized_override_only_for_separable(self):
        hv = q.basis_state("HV", (1, 4))
        singlet = q.bell_state(BellKind.PSI_MINUS, (1, 4))
        assert pr.effective_visibility(hv, BS, PAPER) == 0.0
        assert pr.effective_visibility(hv, BS, PHYSICAL) == 1.0
        assert pr.effective_visibility(singlet, BS, PAPER) == 1.0

    def test_decision_rule(self):
        assert RULE.decide(0.2) == 1
        assert RULE.decide(0.375) == 0
        with pytest.raises(ValueError):
            pr.DecisionRule(0.6, 0.99)
        with pytest.raises(ValueError):
            pr.DecisionRule(0.375, 0.4)


class TestCalibration:
    def test_default(self):
        r, rule = pr.calibrate_rc(0.99)
        assert r == 148
        assert rule.threshold == 0.375
        assert binomial_error_bound(r, 0.375, 0.25) <= 0.01
        assert binomial_error_bound(r, 0.375, 0.5) <= 0.01

    @pytest.mark.parametrize("p,r", [(0.999, 222), (0.95, 96), (0.9, 74)])
    def test_examples(self, p, r):
        assert pr.calibrate_rc(p)[0] == r

    def test_monotone(self):
        targets = np.linspace(0.51, 0.9999, 60)
        sizes = [pr.calibrate_rc(p)[0] for p in targets]
        assert sizes == sorted(sizes)

    def test_minimal(self):
        for p in (0.6, 0.9, 0.99, 0.999):
            r, _ = pr.calibrate_rc(p)
            assert np.exp(-2 * r * 0.125**2) <= 1 - p < np.exp(-2 * (r - 1) * 0.125**2)

    def test_vacuous_limit(self):
        # Hoeffding still asks for ln 2 / (2 gap^2) EGs as the certainty goes to 1/2
        assert pr.calibrate_rc(0.5 + 1e-12)[0] == 23

    @pytest.mark.parametrize("p", [0.5, 1.0, 0.2])
    def test_bad_target(self, p):
        with pytest.raises(ValueError):
            pr.calibrate_rc(p)


class TestFraming:
    def test_faster(self):
        bits = pr.frame_message("FASTER")
        assert len(bits) == 56
        assert bits[:8] == [0, 0, 0, 0, 0, 1, 1, 0]
        assert pr.bits_to_bytes(bits[8:]) == b"FASTER"

    def test_too_long(self):
        with pytest.raises(ValueError):
            pr.frame_message("x" * 300)

    def test_roundtrip(self):
        data = bytes(range(256))
        assert pr.bits_to_bytes(pr.bytes_to_bits(data)) == data

    def test_partial_byte(self):
        with pytest.raises(ValueError):
            pr.bits_to_bytes([1, 0, 1])


class TestSendReceive:
    def test_idealized_roundtrip(self):
        streams = Streams(7)
        pool = pr.provision_scg_pool(80, 148)
        tx = pr.send_message("FASTER", pool, PAPER, streams)
        assert tx.scgs_used == 56
        assert sum(1 for e in tx.entries if e.position < 8) == 8
        msg, report = pr.receive_message(pool, BS, RULE, PAPER, streams)
        assert msg == b"FASTER"
        assert report.bits == tx.bits

    def test_physical_reads_all_ones(self):
        streams = Streams(7)
        pool = pr.provision_scg_pool(2048, 148)
        pr.send_message("FASTER", pool, PHYSICAL, streams)
        msg, report = pr.receive_message(pool, BS, RULE, PHYSICAL, streams)
        assert report.bits[:8] == [1] * 8
        assert len(msg) == 255
        assert sum(report.bits) / len(report.bits) > 0.99
        assert abs(np.mean(report.fractions) - 0.25) < 0.005

    def test_pool_too_small_consumes_nothing(self):
        pool = pr.provision_scg_pool(10, 2)
        with pytest.raises(PoolExhausted):
            pr.send_message("FASTER", pool, PAPER, Streams(0))
        assert not any(s.consumed for s in pool.scgs)

    def test_empty_pool(self):
        with pytest.raises(PoolExhausted):
            pr.send_message("A", pr.SCGPool([], 1), PAPER, Streams(0))

    def test_flag_prefix(self):
        tx = pr.send_message("A", pr.provision_scg_pool(20, 2), PAPER, Streams(0), flag=True)
        assert tx.bits[0] == 1 and tx.scgs_used == 17


class TestPolling:
    def test_schedule(self):
        pool = pr.provision_scg_pool(4, 2)
        pool.next_for_bob()
        assert list(pr.polling_schedule(0.5, pool)) == [(0.5, 1), (1.0, 2), (1.5, 3)]
        with pytest.raises(ValueError):
            list(pr.polling_schedule(0, pool))

    def test_idle_idealized_channel_reads_zeros(self):
        pool = pr.provision_scg_pool(5, 148)
        polls = pr.poll(pool, BS, RULE, PAPER, Streams(1), 1.0, 5)
        assert [p.bit for p in polls] == [0] * 5
        assert [p.time for p in polls] == [1.0, 2.0, 3.0, 4.0, 5.0]

    def test_idle_after_zeros(self):
        streams = Streams(1)
        pool = pr.provision_scg_pool(5, 148)
        for _ in range(5):
            pr.encode_bit(0, pool.next_for_alice(), streams)
        polls = pr.poll(pool, BS, RULE, PAPER, streams, 1.0, 5)
        assert [p.bit for p in polls] == [0] * 5
        assert not any(p.start_flag for p in polls)

    def test_listen_starts_after_flag(self):
        streams = Streams(5)
        pool = pr.provision_scg_pool(40, 148)
        for _ in range(3):
            pr.encode_bit(0, pool.next_for_alice(), streams)
        pr.send_message("A", pool, PAPER, streams, flag=True)
        res = pr.listen(pool, BS, RULE, PAPER, streams, 1.0, 10)
        assert res.start_poll == 5
        assert res.message == b"A"

    def test_poll_past_end(self):
        with pytest.raises(PoolExhausted):
            pr.poll(pr.provision_scg_pool(2, 2), BS, RULE, PAPER, Streams(0), 1.0, 3)


class TestNoSignaling:
    @pytest.mark.parametrize("analyzer", [
        AnalyzerConfig(),
        AnalyzerConfig(visibility=0.3),
        AnalyzerConfig(Setup.BIREFRINGENT_PBS, 1.0, (0.0, 0.0)),
        AnalyzerConfig(Setup.BIREFRINGENT_PBS, 1.0, (np.pi / 8, np.pi / 4)),
    ])
    def test_physical_exact(self, analyzer):
        rep = pr.nosignal_report(analyzer, PHYSICAL)
        assert rep.max_event_difference < 1e-12
        assert rep.max_state_difference < 1e-12

    @pytest.mark.parametrize("source", list(BellKind))
    def test_all_sources(self, source):
        assert pr.nosignal_report(BS, PHYSICAL, source).max_event_difference < 1e-12

    def test_idealized_mode_separates(self):
        rep = pr.nosignal_report(BS, PAPER)
        assert rep.dist_one["different"] == pytest.approx(0.25)
        assert rep.dist_zero["different"] == pytest.approx(0.5)
        assert rep.max_event_difference == pytest.approx(0.25)

    def test_decoder_has_no_classical_input(self):
        params = set(inspect.signature(pr.decode_bit).parameters)
        assert params == {"scg", "analyzer", "rule", "mode", "streams"}

    def test_decoder_never_reads_alice_records(self, monkeypatch):
        pool = pr.provision_scg_pool(1, 20)
        streams = Streams(0)
        pr.encode_bit(1, pool.scgs[0], streams)

        def forbidden(*_a, **_k):
            raise AssertionError("decoder touched a measurement record")

        monkeypatch.setattr(pr, "MeasurementRecord", forbidden)
        for name in ("outcome", "kind", "targets"):
            monkeypatch.setattr(q.MeasurementRecord, name, property(forbidden), raising=False)
        pr.decode_bit(pool.scgs[0], BS, RULE, PHYSICAL, streams)


class TestSortedDiagrams:
    @pytest.fixture(scope="class")
    @staticmethod
    def diagrams():
        return pr.sorted_diagrams(2000, Streams(3))

    def test_bsm_conditioned(self, diagrams):
        for kind in BellKind:
            for basis in ("HV", "DA"):
                assert abs(diagrams.lookup("bsm", kind.value, basis).e_exact) == pytest.approx(1.0)
        assert diagrams.lookup("bsm", BellKind.PSI_MINUS.value, "DA").e_exact == pytest.approx(-1.0)

    def test_ssm_conditioned(self, diagrams):
        for cond in pr.SSM_CONDITIONS:
            assert abs(diagrams.lookup("ssm", cond, "HV").e_exact) == pytest.approx(1.0)
            assert diagrams.lookup("ssm", cond, "DA").e_exact == pytest.approx(0.0, abs=1e-12)

    def test_unsorted_is_flat(self, diagrams):
        for basis, _ in pr.ANALYSIS_BASES:
            row = diagrams.lookup("union", "all", basis)
            assert abs(row.e_exact) < 4 / np.sqrt(row.n_trials)

    def test_trial_counts(self, diagrams):
        n_bsm = diagrams.lookup("bsm", "all", "HV").n_trials
        n_ssm = diagrams.lookup("ssm", "all", "HV").n_trials
        assert n_bsm + n_ssm == 2000
        assert sum(diagrams.lookup("bsm", k.value, "HV").n_trials for k in BellKind) == n_bsm

    def test_sampled_follow_exact(self, diagrams):
        for row in diagrams.rows():
            if row.n_sampled >= 100:
                assert abs(row.e_sampled - row.e_exact) < 4 / np.sqrt(row.n_sampled)

    def test_needs_trials(self):
        with pytest.raises(ValueError):
            pr.sorted_diagrams(0, Streams(0))

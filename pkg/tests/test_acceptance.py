"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line that the terminal summary prints at the
end of the run. The end-to-end and sweep runs take several minutes.
"""

import json

import numpy as np
import pytest

from oracles import enumerate_weights, naive_conv1d, naive_gmp
from tcndpd.activations import (
    ALL_KINDS,
    KINKS,
    SPOT_VALUES,
    activation_apply,
    activation_derivative,
)
from tcndpd.autodiff import (
    ConvSpec,
    conv1d_backward,
    conv1d_forward,
    finite_difference_check,
)
from tcndpd.cli import main as cli_main
from tcndpd.export import load_history, load_report
from tcndpd.harness import TrainConfig, chain_loss, evaluate_chain, ofdm_splits, read_table, train_dpd
from tcndpd.metrics import AcprPlan, acpr_db, evm_db, nmse_db, psd_welch
from tcndpd.pa import (
    GmpPaModel,
    GmpStructure,
    PaChain,
    gmp_apply,
    gmp_apply_iq,
    gmp_backward_iq,
    gmp_fit,
    make_reference_pa,
)
from tcndpd.signals import ComplexSignal, OfdmConfig, generate_ofdm
from tcndpd.tcn import (
    TcnArch,
    TcnModel,
    causal_padding,
    count_params,
    extract_features,
    init_model,
    iq_rows,
    noncausal_padding,
    receptive_field,
    solve_width_for_budget,
    tcn_forward,
)

SMOOTH = ("gelu", "tanh", "silu", "sigmoid", "softplus")


def test_padding_formulas(accept):
    with accept("padding formulas") as c:
        got = (causal_padding(5), noncausal_padding(5, 1), noncausal_padding(5, 8),
               noncausal_padding(3, 1))
        c.note(f"causal K=5 {got[0]}, K=5 D=1 {got[1]}, K=5 D=8 {got[2]}, K=3 D=1 {got[3]}")
        assert got == (4, 2, 16, 1)


def test_conv_oracle_equivalence(accept):
    with accept("convolution oracle equivalence") as c:
        rng = np.random.default_rng(2024)
        n = 0
        for C in range(1, 5):
            for T in range(1, 17):
                for K in (1, 3, 5):
                    for D in (1, 2, 4):
                        for g in sorted({1, C}):
                            for mode in ("noncausal", "causal"):
                                spec = ConvSpec(C, C, K, D, groups=g, padding_mode=mode)
                                x = rng.normal(size=(C, T))
                                w = rng.normal(size=spec.weight_shape)
                                b = rng.normal(size=C)
                                fast = conv1d_forward(x, w, b, spec)
                                slow = naive_conv1d(x, w, b, K, D, g, mode)
                                assert np.array_equal(fast, slow), (C, T, K, D, g, mode)
                                n += 1
        c.note(f"{n} instances bit-identical")


def _conv_case(spec, seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(2, spec.in_channels, 11))
    w = rng.normal(size=spec.weight_shape)
    b = rng.normal(size=spec.out_channels)
    probe = rng.normal(size=conv1d_forward(x, w, b, spec).shape)

    def f(p):
        y = conv1d_forward(p["x"], p["w"], p["b"], spec)
        gx, gw, gb = conv1d_backward(probe, p["x"], p["w"], spec)
        return float(np.sum(probe * y)), {"x": gx, "w": gw, "b": gb}

    return f, {"x": x, "w": w, "b": b}


def test_gradient_correctness(accept):
    with accept("gradient correctness") as c:
        errs = {}
        for name, spec in {
            "dense conv": ConvSpec(3, 2, 5, 2),
            "depthwise conv": ConvSpec(3, 3, 5, 4, groups=3),
            "causal conv": ConvSpec(2, 3, 3, 2, padding_mode="causal"),
            "pointwise conv": ConvSpec(4, 2, 1),
        }.items():
            f, p = _conv_case(spec, len(errs))
            errs[name] = finite_difference_check(f, p, eps=1e-5)

        rng = np.random.default_rng(1)
        v = rng.uniform(-4, 4, size=64)
        for kind in ALL_KINDS:
            vv = v.copy()
            for k in KINKS.get(kind, ()):
                vv = vv[np.abs(vv - k) > 1e-3]
            g = rng.normal(size=vv.size)

            def f(p, kind=kind, g=g):
                return (float(np.sum(g * activation_apply(kind, p["v"]))),
                        {"v": g * activation_derivative(kind, p["v"])})

            errs[f"act {kind.label}"] = finite_difference_check(f, {"v": vv}, eps=1e-5)

        pa = make_reference_pa(0, "moderate")
        xr, xi, pr, pi = rng.normal(size=(4, 40))

        def fpa(p):
            yr, yi = gmp_apply_iq(pa, p["r"], p["i"])
            gr, gi = gmp_backward_iq(pa, p["r"], p["i"], pr, pi)
            return float(np.sum(pr * yr + pi * yi)), {"r": gr, "i": gi}

        errs["gmp"] = finite_difference_check(fpa, {"r": xr, "i": xi}, eps=1e-5)

        chain = PaChain(make_reference_pa(0, "moderate"))
        sig = generate_ofdm(OfdmConfig(fft_size=256, cp_length=64, window_length=64,
                                       n_symbols=1))[0]
        x = sig.with_samples(sig.samples[:160])
        for kind in SMOOTH:
            arch = TcnArch(activation=kind, hidden_channels=3)
            # random output layer so every block carries a non-vanishing gradient
            params = init_model(arch, 7, zero_output=False).params

            def fc(p, arch=arch):
                return chain_loss(TcnModel(arch, p), chain, x, margins=(30, 30))

            errs[f"chain {kind}"] = finite_difference_check(fc, params, eps=1e-5)
        worst = max(errs, key=errs.get)
        c.note(f"{len(errs)} checks, worst {worst} {errs[worst]:.2e}")
        assert errs[worst] < 1e-4


def _probe(arch, seed=0):
    model = init_model(arch, seed, zero_output=False)
    T = 2 * arch.receptive_field + 9
    rng = np.random.default_rng(seed)
    feats = rng.normal(size=(arch.n_features, T))
    raw = np.zeros((2, T))
    base = tcn_forward(model, feats, raw)
    bumped = feats.copy()
    bumped[:, T // 2] += 1.0
    return int(np.sum(np.any(tcn_forward(model, bumped, raw) != base, axis=0)))


def test_receptive_field(accept):
    with accept("receptive field") as c:
        for K in (3, 5):
            for d in (1, 2):
                for N in (1, 2, 3, 4):
                    arch = TcnArch(N, K, d, 3, activation="tanh")
                    expected = 1 + (K - 1) * sum(d ** (n - 1) for n in range(1, N + 1))
                    assert receptive_field(K, d, N) == expected
                    assert _probe(arch) == expected, (K, d, N)
        c.note(f"16 configs probed; K=5 d=2 N=4 -> {_probe(TcnArch(activation='tanh'))}")
        assert receptive_field(5, 2, 4) == 61


def test_residual_identity(accept):
    with accept("residual identity") as c:
        rng = np.random.default_rng(99)
        for i in range(100):
            N = int(rng.integers(1, 5))
            arch = TcnArch(
                N, int(rng.choice([1, 3, 5, 7])), int(rng.integers(1, 4)),
                tuple(int(w) for w in rng.integers(1, 9, size=N + 1)),
                activation=ALL_KINDS[int(rng.integers(0, 22))],
                padding_mode=str(rng.choice(["noncausal", "causal"])),
            )
            model = init_model(arch, seed=i)
            T = int(rng.integers(arch.receptive_field, arch.receptive_field + 50))
            x = rng.normal(size=T) + 1j * rng.normal(size=T)
            out = tcn_forward(model, extract_features(x, arch.features), iq_rows(x))
            assert np.array_equal(out, iq_rows(x)), arch
        c.note("100 random architectures bit-exact")


def test_parameter_budgets(accept):
    with accept("parameter budgets") as c:
        parts = []
        for budget in (200, 500, 1000):
            sol = solve_width_for_budget(budget, TcnArch())
            arch = sol.apply(TcnArch())
            assert sol.count == enumerate_weights(arch) == count_params(arch)
            assert 0.95 * budget <= sol.count <= budget
            parts.append(f"{budget}->{sol.count} {sol.widths}")
        c.note("; ".join(parts))


def test_activation_library(accept):
    with accept("activation library") as c:
        for sv in SPOT_VALUES:
            assert activation_apply(sv.kind, np.array([sv.x]))[0] == pytest.approx(sv.y, abs=1e-12)
        rng = np.random.default_rng(5)
        worst = 0.0
        for kind in ALL_KINDS:
            v = rng.uniform(-8, 8, size=64)
            for k in KINKS.get(kind, ()):
                v = v[np.abs(v - k) > 1e-3]
            eps = 1e-6
            num = (activation_apply(kind, v + eps) - activation_apply(kind, v - eps)) / (2 * eps)
            ana = activation_derivative(kind, v)
            err = np.max(np.abs(ana - num) / np.maximum(np.maximum(np.abs(ana), np.abs(num)), 1.0))
            worst = max(worst, float(err))
        c.note(f"{len(SPOT_VALUES)} spot values; 22 kinds, worst derivative error {worst:.1e}")
        assert worst < 1e-5


def test_metric_oracles(accept):
    with accept("metric oracles") as c:
        rng = np.random.default_rng(0)
        fs = 160e6
        ref = rng.normal(size=4096) + 1j * rng.normal(size=4096)
        n = nmse_db(ref, 0.9 * ref)
        assert abs(n + 20.0) <= 1e-9

        sig, grid = generate_ofdm(OfdmConfig())
        y = gmp_apply(make_reference_pa(), sig)
        plan = AcprPlan.adjacent(OfdmConfig().occupied_bw_hz)
        assert acpr_db(y.with_samples(4.0 * y.samples), plan) == acpr_db(y, plan)
        assert acpr_db(y.with_samples(0.125 * y.samples), plan) == acpr_db(y, plan)

        wn = []
        for s in range(4):
            r = np.random.default_rng(10 + s)
            noise = (r.normal(size=1 << 15) + 1j * r.normal(size=1 << 15)) / np.sqrt(2)
            wn.append(acpr_db(ComplexSignal(noise, fs), plan))
        white = np.mean(wn, axis=0)
        assert np.abs(white).max() <= 0.3

        e = evm_db(grid.symbols, 1.01 * grid.symbols, gain_correct=False)
        assert abs(e + 40.0) <= 1e-9

        p_noise = np.mean([psd_welch(ComplexSignal(
            (np.random.default_rng(20 + s).normal(size=1 << 15)
             + 1j * np.random.default_rng(40 + s).normal(size=1 << 15)) / np.sqrt(2), fs
        )).total_power() for s in range(4)])
        assert abs(p_noise - 1.0) <= 0.05
        t = np.arange(1 << 14)
        tones = np.exp(2j * np.pi * 37 * t / 1024) + 0.5 * np.exp(-2j * np.pi * 211 * t / 1024)
        p_tone = psd_welch(ComplexSignal(tones, fs)).total_power()
        assert abs(p_tone / 1.25 - 1.0) <= 1e-3
        c.note(f"nmse {n:.12f} dB, white ACPR {white[0]:+.3f}/{white[1]:+.3f} dBc, "
               f"EVM {e:.12f} dB, Parseval noise {p_noise:.4f} tones {p_tone / 1.25:.6f}")


def test_gmp_oracle(accept):
    with accept("GMP oracle") as c:
        truth = make_reference_pa(3, "severe")
        x = generate_ofdm(OfdmConfig())[0].samples
        y = gmp_apply(truth, x)
        fit = gmp_fit(x, y, truth.structure)
        rel = float(np.max(np.abs(fit.coeffs - truth.coeffs) / np.abs(truth.coeffs)))
        assert rel <= 1e-8
        rng = np.random.default_rng(8)
        for s in (GmpStructure(), GmpStructure((1, 3, 5), 2, (1, -1))):
            xs = rng.normal(size=48) + 1j * rng.normal(size=48)
            cf = rng.normal(size=s.n_coeffs) + 1j * rng.normal(size=s.n_coeffs)
            assert np.array_equal(gmp_apply(GmpPaModel(s, cf), xs), naive_gmp(s.terms(), cf, xs))
        c.note(f"fit max relative coefficient error {rel:.1e}; apply bit-identical")


def test_end_to_end_linearization(accept):
    with accept("end-to-end synthetic linearization") as c:
        splits = ofdm_splits(OfdmConfig())
        pa = PaChain(make_reference_pa(0, "moderate"))
        base_arch = TcnArch()
        arch = solve_width_for_budget(500, base_arch).apply(base_arch)
        cfg = TrainConfig(epochs=500, report_every=0)
        model, rec = train_dpd(pa, splits["train"], arch, cfg, splits["val"])
        before = evaluate_chain(None, pa, splits["test"])
        after = evaluate_chain(model, pa, splits["test"])
        dl = after.acpr_left_dbc - before.acpr_left_dbc
        dr = after.acpr_right_dbc - before.acpr_right_dbc
        de = after.evm_db - before.evm_db
        c.note(f"{count_params(model)} params; ACPR {before.acpr_left_dbc:.2f}/"
               f"{before.acpr_right_dbc:.2f} -> {after.acpr_left_dbc:.2f}/"
               f"{after.acpr_right_dbc:.2f} dBc ({dl:+.2f}/{dr:+.2f}); NMSE {after.nmse_db:.2f} dB; "
               f"EVM {before.evm_db:.2f} -> {after.evm_db:.2f} dB; {rec.wall_clock_s:.0f} s")
        assert -35 <= before.acpr_left_dbc <= -25 and -35 <= before.acpr_right_dbc <= -25
        assert dl <= -15 and dr <= -15
        assert after.nmse_db <= -35
        assert de <= -10


def _cli(argv):
    code = cli_main(argv)
    assert code == 0, argv
    return code


def test_determinism(accept, tmp_path, capsys):
    with accept("determinism") as c:
        a, b = tmp_path / "a", tmp_path / "b"
        _cli(["train-dpd", "--epochs", "10", "--out", str(a)])
        _cli(["train-dpd", "--config", str(a / "manifest.json"), "--out", str(b)])
        ha, hb = load_history(a / "history.csv"), load_history(b / "history.csv")
        assert ha == hb and len(ha) == 10
        assert (a / "model.txt").read_text() == (b / "model.txt").read_text()
        s1, s2 = tmp_path / "s1", tmp_path / "s2"
        sweep = ["sweep-act", "--epochs", "3", "--seeds", "0,1",
                 "--set", 'sweep.kinds=["Hardswish","Tanh","PReLU"]']
        _cli(sweep + ["--out", str(s1)])
        _cli(["sweep-act", "--config", str(s1 / "manifest.json"), "--out", str(s2)])
        t1 = (s1 / "sweep_activations.csv").read_text()
        assert t1 == (s2 / "sweep_activations.csv").read_text()
        capsys.readouterr()
        c.note("train-dpd history/weights and sweep table identical on manifest rerun")


def test_sweep_harness_shape(accept, tmp_path, capsys):
    with accept("sweep harness shape") as c:
        act = tmp_path / "act"
        _cli(["sweep-act", "--epochs", "20", "--seeds", "0,1", "--out", str(act)])
        rows = read_table(act / "sweep_activations.csv")
        assert len(rows) == 22
        assert [int(r["id"]) for r in rows] == list(range(1, 23))
        assert rows[5]["activation"] == "Hardswish"
        for r in rows:
            for key in ("nmse_mean_db", "nmse_std_db", "acpr_mean_dbc", "acpr_std_dbc"):
                assert np.isfinite(float(r[key])), (r["activation"], key)
        bud = tmp_path / "bud"
        _cli(["sweep-budget", "--epochs", "100", "--seeds", "0,1", "--budgets", "200,500,1000",
              "--out", str(bud)])
        brows = read_table(bud / "sweep_budgets.csv")
        loss = [float(r["train_loss_mean"]) for r in brows]
        capsys.readouterr()
        c.note(f"22 activation rows; budget rows {[r['budget'] for r in brows]} "
               f"train loss {', '.join(f'{v:.3e}' for v in loss)}")
        assert [int(r["budget"]) for r in brows] == [200, 500, 1000]
        assert loss[0] >= loss[1] >= loss[2]


def test_optional_dataset_path(accept, tmp_path, capsys):
    with accept("optional dataset path") as c:
        gen = tmp_path / "gen"
        _cli(["gen-data", "--out", str(gen)])
        # one OpenDPD-style file holding the whole capture
        rows = []
        for name in ("train", "val", "test"):
            lines = (gen / f"{name}.csv").read_text().splitlines()
            rows += lines[1:] if rows else lines
        data = tmp_path / "capture.csv"
        data.write_text("\n".join(rows) + "\n")
        fit, run, ev = tmp_path / "fit", tmp_path / "run", tmp_path / "ev"
        _cli(["fit-pa", "--data", str(data), "--out", str(fit)])
        _cli(["train-dpd", "--data", str(data), "--pa", str(fit / "pa.txt"), "--epochs", "5",
              "--out", str(run)])
        _cli(["eval", "--data", str(data), "--pa", str(fit / "pa.txt"),
              "--dpd", str(run / "model.txt"), "--out", str(ev)])
        rep = load_report(ev, prefix="test_")
        res = json.loads((fit / "manifest.json").read_text())["results"]
        capsys.readouterr()
        c.note(f"fit-pa val NMSE {res['val_nmse_db']:.1f} dB; eval NMSE {rep.nmse_db:.2f} dB, "
               f"ACPR {rep.acpr_left_dbc:.2f}/{rep.acpr_right_dbc:.2f} dBc")
        assert np.isfinite(rep.nmse_db) and rep.psd is not None

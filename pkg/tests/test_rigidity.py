import json

import numpy as np
import pytest

from hitchin import reps, rigidity as rg
from hitchin.errors import DegenerateConfiguration, InputError, NoConjugator, SingularAssembly
from hitchin.words import Word, enumerate_classes, schema_an_b, schema_family

TRIPLE = ("a", "b", "baB")


def sources():
    for d in (2, 3):
        for preset in (reps.punctured_torus_preset, reps.schottky_preset):
            base = reps.lift_rep(preset(), d) if d > 2 else preset()
            yield base
            for seed in range(10):
                yield reps.perturb(base, 0.01, seed)


def images(rep, words):
    return [rep(Word.parse(w)) for w in words]


def random_conjugator(rng, d):
    G = rng.normal(size=(d, d))
    return G / abs(np.linalg.det(G)) ** (1 / d)


def test_aligned_triple():
    rep = reps.lift_rep(reps.schottky_preset(), 3)
    inv = rg.triple_invariants(rep, "a", "a", "a", strict=False)
    assert np.allclose(np.diagonal(inv.R, axis1=0, axis2=1).diagonal(), 1.0)
    assert all(np.isclose(inv.R[i, i, i], 1.0) for i in range(3))
    with pytest.raises(DegenerateConfiguration):
        rg.triple_invariants(rep, "a", "a", "a")


def test_d2_triple_against_frame_oracle():
    rep = reps.schottky_preset()
    A, B, D = images(rep, TRIPLE)
    inv = rg.triple_invariants(rep, *TRIPLE)
    assert np.all(np.isfinite(inv.R)) and np.all(inv.R != 0)
    eigs = []
    for M in (A, B, D):
        w, V = np.linalg.eig(M)
        o = np.argsort(-np.abs(w))
        V = np.real(V[:, o])
        eigs.append((V, np.linalg.inv(V)))
    (VA, DA), (VB, DB), (VD, DD) = eigs
    for i in range(2):
        for j in range(2):
            for k in range(2):
                pa, pb, pd = (np.outer(V[:, n], Dl[n]) for (V, Dl), n in zip(eigs, (i, j, k)))
                expect = np.trace(pa @ pb @ pd) / np.trace(pb @ pd)
                assert np.isclose(inv.R[i, j, k], expect, rtol=1e-10)


def test_bracket_and_trace_paths_agree():
    rep = reps.perturb(reps.lift_rep(reps.schottky_preset(), 3), 0.01, 1)
    assert rg.triple_invariants(rep, *TRIPLE).crosscheck <= 1e-9


@pytest.mark.parametrize("rep", list(sources()), ids=lambda r: f"{r.label}-{r.dim}")
def test_reconstruction_round_trip(rep):
    src = images(rep, TRIPLE)
    inv = rg.triple_invariants_from_matrices(*src)
    rt = rg.round_trip(src, inv)
    assert rt.conjugator_residual <= 1e-8 and rt.invariant_residual <= 1e-8
    A, B, D = rg.reconstruct_triple(inv)
    assert np.array_equal(A, np.diag(inv.lam_a))


def test_reconstruction_normal_form():
    inv = rg.triple_invariants(reps.lift_rep(reps.schottky_preset(), 3), *TRIPLE)
    A, B, D = rg.reconstruct_triple(inv)
    es_b = rg.numlin.eig_split(B)
    b0 = es_b.vectors[:, 0] / es_b.vectors[0, 0]
    assert np.allclose(b0, 1.0)


def test_tampered_invariants_fail_round_trip():
    rep = reps.perturb(reps.lift_rep(reps.punctured_torus_preset(), 3), 0.01, 2)
    src = images(rep, TRIPLE)
    inv = rg.triple_invariants_from_matrices(*src)
    rt = rg.round_trip(src, inv.tampered((2, 0, 2), 1.1))
    assert rt.residual > 0.05
    with pytest.raises(SingularAssembly):
        rg.reconstruct_triple(inv.tampered((0, 0, 0), 0.0))


def test_conjugator_recovers_conjugation():
    rng = np.random.default_rng(0)
    for d in (2, 3, 4):
        base = reps.schottky_preset()
        rep = reps.perturb(reps.lift_rep(base, d), 0.01, d) if d > 2 else base
        G = random_conjugator(rng, d)
        other = rep.conjugate(np.linalg.inv(G))
        words = ["a", "b", "ab", "aB", "aab"]
        C, res = rg.find_conjugator(rep, other, words)
        assert res <= 1e-9
        # C^-1 G is central, i.e. a multiple of the identity
        S = np.linalg.solve(C, G)
        assert np.allclose(S, S[0, 0] * np.eye(d), atol=1e-8 * abs(S[0, 0]))


def test_conjugator_is_scalar_on_agreement():
    rep = reps.perturb(reps.lift_rep(reps.schottky_preset(), 3), 0.01, 4)
    C, _ = rg.find_conjugator(rep, rep, ["a", "b", "ab"])
    assert np.allclose(np.abs(C), np.eye(3), atol=1e-8)


def test_conjugator_failures():
    rep = reps.perturb(reps.lift_rep(reps.schottky_preset(), 3), 0.02, 1)
    other = reps.perturb(reps.lift_rep(reps.punctured_torus_preset(), 3), 0.02, 9)
    with pytest.raises(NoConjugator) as exc:
        rg.find_conjugator(rep, other, ["a", "b", "ab"])
    assert exc.value.worst_word in {"a", "b", "ab"}
    with pytest.raises(NoConjugator):
        rg.find_conjugator(rep, reps.contragredient(rep), ["a", "b", "ab", "aB"])


def test_compare_spectra():
    rep = reps.lift_rep(reps.schottky_preset(), 3)
    classes = [schema_an_b(n) for n in range(0, 9)]
    for mode in rg.MODES:
        assert rg.compare_spectra(rep, rep, classes, mode)["max_delta"] == 0
    G = random_conjugator(np.random.default_rng(1), 3)
    conj = rep.conjugate(G)
    for mode in rg.MODES:
        assert rg.compare_spectra(rep, conj, classes, mode)["max_delta"] <= 1e-9
    pert = reps.perturb(rep, 0.01, 2)
    assert rg.compare_spectra(rep, pert, classes, "length")["max_delta"] > 1e-4
    with pytest.raises(InputError):
        rg.compare_spectra(rep, rep, classes, "bogus")


def test_equivalence_on_schema():
    rep = reps.perturb(reps.lift_rep(reps.punctured_torus_preset(), 3), 0.01, 7)
    classes = [schema_an_b(n) for n in range(0, 11)]
    conj = rep.conjugate(random_conjugator(np.random.default_rng(2), 3))
    assert rg.compare_spectra(rep, conj, classes, "length")["max_delta"] <= 1e-8
    assert rg.compare_spectra(rep, conj, classes, "eigenvalue")["max_delta"] <= 1e-8
    other = reps.perturb(rep, 0.01, 8)
    for mode in ("length", "trace", "eigenvalue"):
        assert rg.compare_spectra(rep, other, classes, mode)["max_delta"] > 1e-4


def test_numeric_rank():
    rank, ratio = rg.numeric_rank(np.array([3.0, 2.0, 1e-9]))
    assert rank == 2 and np.isclose(ratio, 2e9)
    assert rg.numeric_rank(np.array([3.0, 2.0, 1.0]))[0] == 3
    assert rg.numeric_rank(np.array([1e-12, 0.0]))[0] == 0


def test_det_gradient_vanishes():
    rep = reps.lift_rep(reps.schottky_preset(), 3)
    J = rg.length_jacobian(rep, ["a", "ab"], mode="det")
    # only rounding of the determinant divided by the step survives
    L = rg.length_jacobian(rep, ["a", "ab"])
    assert np.max(np.abs(J.matrix)) <= 1e-6 * np.max(np.abs(L.matrix))


def test_jacobian_rank_d2():
    rep = reps.schottky_preset()
    classes = [c for c in enumerate_classes(2, 3)][:12]
    JL = rg.length_jacobian(rep, classes)
    JT = rg.length_jacobian(rep, classes, mode="trace")
    assert JL.rank == 3 and JT.rank == 3
    report = rg.kernel_rank_report(JL, JT)
    assert report["kernels_agree"] and report["max_angle"] <= 1e-4
    same = rg.kernel_rank_report(JL, JL)
    assert same["max_angle"] <= 1e-12


def test_jacobian_rank_d3():
    rep = reps.perturb(reps.lift_rep(reps.punctured_torus_preset(), 3), 0.01, 3)
    classes = schema_family(4)
    J = rg.length_jacobian(rep, classes, workers=2)
    assert J.rank == 8 and J.gap_ratio >= 1e3
    assert J.matrix.shape == (20, 18)
    serial = rg.length_jacobian(rep, classes)
    assert np.array_equal(serial.matrix, J.matrix)


def test_mismatched_kernel_report_is_diagnostic():
    rep = reps.schottky_preset()
    JL = rg.length_jacobian(rep, ["a", "b"])
    JT = rg.length_jacobian(rep, ["ab", "aB", "aab"], mode="trace")
    report = rg.kernel_rank_report(JL, JT)
    assert "max_angle" in report


def test_render_report():
    text = rg.render_report("x", {"d": 3}, {"v": np.float64(1.5), "bad": float("nan")}, {"ok": np.bool_(True)})
    doc = json.loads(text)
    assert doc["pass"]["ok"] is True and doc["metrics"]["bad"] == "nan"
    assert text.endswith("\n")

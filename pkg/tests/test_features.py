import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import sphgp.features as F
from sphgp.harmonics import eval_harmonics
from sphgp.kernels import (
    ZonalKernel,
    kernel_eval,
    kernel_spectrum,
    lift_points,
    mercer_reconstruction,
)

PAIRINGS = [
    ("arccos1", "softplus"),
    ("matern52", "softplus"),
    ("matern52", "relu"),
    ("squaredexp", "relu"),
]


@pytest.fixture(scope="module", params=PAIRINGS, ids=lambda p: f"{p[0]}-{p[1]}")
def setting(request):
    family, act_kind = request.param
    from sphgp.harmonics import build_harmonic_basis
    from sphgp.special_math import SphereGeometry

    geom = SphereGeometry.for_dimension(3)
    basis = build_harmonic_basis(geom, 12, seed=1)
    kernel = ZonalKernel(family, amplitude=1.3, lengthscale=0.8)
    spectrum = kernel_spectrum(kernel, geom, 12)
    activation = F.ActivationShape.build(act_kind, geom, 12)
    return kernel, spectrum, activation, basis


def make_sets(activation, basis, rng, d=2):
    Z = rng.normal(size=(6, d))
    Za = rng.normal(size=(6, d + 1))
    Wa = rng.normal(size=(5, d + 1))
    return {
        "points": F.InducingSet("points", locations=Z),
        "activations": F.InducingSet("activations", locations=Za, activation=activation),
        "activations2": F.InducingSet("activations", locations=Wa, activation=activation),
        "harmonics": F.InducingSet("harmonics", basis=basis),
    }


def harmonic_oracle_kuu(kernel, spectrum, activation, basis, Za):
    """Activation Kuu via the level-expanded harmonic feature map."""
    zn = np.linalg.norm(Za, axis=1)
    zhat = Za / zn[:, None]
    Y = np.asarray(eval_harmonics(basis, zhat))
    col_lev = basis.level_of_column()
    lam = spectrum.coefficients
    sig = activation.spectrum.coefficients
    mask = lam > 0
    ratio = np.where(mask, sig**2 / np.where(mask, lam, 1.0), 0.0)[col_lev]
    p = kernel.homogeneity_degree
    sz = zn**p if p else np.ones_like(zn)
    return (Y * ratio[None, :]) @ Y.T * np.outer(sz, sz)


def test_activation_kuu_matches_harmonic_oracle(setting, rng):
    kernel, spectrum, activation, basis = setting
    Za = rng.normal(size=(6, 3))
    act_u = F.InducingSet("activations", locations=Za, activation=activation)
    Kuu = F.cov_Kuu(act_u, kernel, spectrum)
    oracle = harmonic_oracle_kuu(kernel, spectrum, activation, basis, Za)
    err = np.max(np.abs(Kuu - oracle)) / np.max(np.abs(oracle))
    assert err < 1e-12


def test_activation_kuf_is_truncated_projection(setting, rng):
    """Cov(u_m, f(x)) sums the activation expansion over kernel-active
    levels only — the inducing variable is a projected feature."""
    kernel, spectrum, activation, basis = setting
    Za = rng.normal(size=(6, 3))
    X = rng.normal(size=(7, 2))
    act_u = F.InducingSet("activations", locations=Za, activation=activation)
    Kuf = F.cross_cov_Kuf(act_u, kernel, X, spectrum)

    zn = np.linalg.norm(Za, axis=1)
    zhat = Za / zn[:, None]
    Y = np.asarray(eval_harmonics(basis, zhat))
    xhat, xn = lift_points(X, kernel.bias)
    Yx = np.asarray(eval_harmonics(basis, np.asarray(xhat)))
    col_lev = basis.level_of_column()
    mask = spectrum.coefficients > 0
    sig = np.where(mask, activation.spectrum.coefficients, 0.0)[col_lev]
    p = kernel.homogeneity_degree
    sz = zn**p if p else np.ones_like(zn)
    sx = np.asarray(xn) ** p if p else np.ones(len(X))
    oracle = (Y * sig[None, :]) @ Yx.T * np.outer(sz, sx)
    err = np.max(np.abs(Kuf - oracle)) / np.max(np.abs(oracle))
    assert err < 1e-12


def test_joint_covariance_is_psd(setting, rng):
    """[K_uu, K_uf; K_fu, K_ff] must be PSD even for divergent pairings."""
    kernel, spectrum, activation, _ = setting
    Za = rng.normal(size=(5, 3))
    X = rng.normal(size=(6, 2))
    act_u = F.InducingSet("activations", locations=Za, activation=activation)
    Kuu = F.cov_Kuu(act_u, kernel, spectrum)
    Kuf = F.cross_cov_Kuf(act_u, kernel, X, spectrum)
    Kff = np.asarray(kernel_eval(kernel, X))
    joint = np.block([[Kuu, Kuf], [Kuf.T, Kff]])
    eigs = np.linalg.eigvalsh(joint)
    assert eigs.min() > -1e-10 * max(eigs.max(), 1.0)


def test_schur_complement_psd(setting, rng):
    """C_vv = K_vv - Q_vv stays PSD across base/orthogonal pairings."""
    kernel, spectrum, activation, basis = setting
    sets = make_sets(activation, basis, rng)
    for bkey, okey in [("activations", "points"), ("points", "activations2"),
                       ("activations", "activations2")]:
        base, ortho = sets[bkey], sets[okey]
        Kuu = F.cov_Kuu(base, kernel, spectrum)
        Kvv = F.cov_Kuu(ortho, kernel, spectrum)
        Kvu = F.cross_cov_Kvu(ortho, base, kernel, spectrum)
        jitter = F.JITTER_REL * np.mean(np.diag(Kuu))
        Cvv = Kvv - Kvu @ np.linalg.solve(Kuu + jitter * np.eye(len(Kuu)), Kvu.T)
        eigs = np.linalg.eigvalsh(0.5 * (Cvv + Cvv.T))
        assert eigs.min() > -1e-8 * max(eigs.max(), 1.0), (bkey, okey)


def test_points_blocks_are_kernel_grams(setting, rng):
    kernel, spectrum, activation, basis = setting
    Z = rng.normal(size=(6, 2))
    W = rng.normal(size=(5, 2))
    pts_u = F.InducingSet("points", locations=Z)
    pts_v = F.InducingSet("points", locations=W)
    assert np.max(np.abs(
        F.cov_Kuu(pts_u, kernel, spectrum) - np.asarray(kernel_eval(kernel, Z))
    )) < 1e-12
    assert np.max(np.abs(
        F.cross_cov_Kvu(pts_v, pts_u, kernel, spectrum)
        - np.asarray(kernel_eval(kernel, W, Z))
    )) < 1e-12


def test_kvu_case_symmetries(setting, rng):
    """Cross blocks agree with their transposed counterparts."""
    kernel, spectrum, activation, basis = setting
    sets = make_sets(activation, basis, rng)
    for a, b in [("harmonics", "activations"), ("points", "activations"),
                 ("points", "harmonics")]:
        ab = F.cross_cov_Kvu(sets[a], sets[b], kernel, spectrum)
        ba = F.cross_cov_Kvu(sets[b], sets[a], kernel, spectrum)
        assert np.max(np.abs(ab - ba.T)) < 1e-12, (a, b)


def test_same_set_kvu_equals_kuu(setting, rng):
    kernel, spectrum, activation, basis = setting
    Za = rng.normal(size=(6, 3))
    act_u = F.InducingSet("activations", locations=Za, activation=activation)
    act_u2 = F.InducingSet("activations", locations=Za.copy(), activation=activation)
    Kuu = F.cov_Kuu(act_u, kernel, spectrum)
    Kvu = F.cross_cov_Kvu(act_u2, act_u, kernel, spectrum)
    assert np.max(np.abs(Kvu - Kuu)) < 1e-12


def test_harmonic_base_collapse(setting, rng):
    """With the full harmonic base, C_vf = K_vf - Q_vf vanishes for any
    orthogonal set drawn from the same truncated span."""
    kernel, spectrum, activation, basis = setting
    har_u = F.InducingSet("harmonics", basis=basis)
    X = rng.normal(size=(7, 2))
    Kuf = F.cross_cov_Kuf(har_u, kernel, X, spectrum)
    Kuu = F.cov_Kuu(har_u, kernel, spectrum)
    Kvu = F.cross_cov_Kvu(har_u, har_u, kernel, spectrum)
    Cvf = Kuf - Kvu @ np.linalg.solve(Kuu, Kuf)
    assert np.max(np.abs(Cvf)) / np.max(np.abs(Kuf)) < 1e-12


def test_nystrom_with_full_harmonic_base_reconstructs_kff(setting, rng):
    """With the full harmonic base, Q_ff equals the level-truncated kernel
    exactly (the remaining gap to k(x, x') is pure series truncation)."""
    kernel, spectrum, activation, basis = setting
    har_u = F.InducingSet("harmonics", basis=basis)
    X = rng.normal(size=(7, 2))
    Kuf = F.cross_cov_Kuf(har_u, kernel, X, spectrum)
    Kuu = F.cov_Kuu(har_u, kernel, spectrum)
    blocks = F.CovarianceBlocks(Kuf=Kuf, Kuu=Kuu)
    q = F.nystrom_terms(blocks, Kff_or_diag=np.zeros((7, 7)))

    Xhat, norms = lift_points(X, kernel.bias)
    cos = np.clip(np.asarray(Xhat) @ np.asarray(Xhat).T, -1.0, 1.0)
    Kff_trunc = np.asarray(mercer_reconstruction(spectrum, cos))
    if kernel.homogeneity_degree != 0.0:
        s = np.asarray(norms)
        Kff_trunc = Kff_trunc * (s[:, None] * s[None, :]) ** kernel.homogeneity_degree
    err = np.max(np.abs(q["qff"] - Kff_trunc)) / np.max(np.abs(Kff_trunc))
    assert err < 1e-8


def test_harmonic_kuu_is_diagonal(setting):
    kernel, spectrum, activation, basis = setting
    har_u = F.InducingSet("harmonics", basis=basis)
    Kuu = F.cov_Kuu(har_u, kernel, spectrum)
    off = Kuu - np.diag(np.diag(Kuu))
    assert np.max(np.abs(off)) < 1e-12
    assert np.all(np.diag(Kuu) > 0)


def test_activation_feature_exact_form(rng):
    """The standalone feature op keeps the exact activation, not the
    truncated series: relu feature equals max(zhat . xhat, 0) * |z| |x~|."""
    z = rng.normal(size=3)
    x = rng.normal(size=2)
    value = F.activation_feature(z, x, "relu", bias=1.0)
    xhat, xn = lift_points(x[None, :], 1.0)
    zn = np.linalg.norm(z)
    inner = (z / zn) @ np.asarray(xhat)[0]
    ref = max(inner, 0.0) * zn * float(np.asarray(xn)[0])
    assert value == pytest.approx(ref, abs=1e-12)


def test_chol_with_jitter_failure(rng):
    bad = -np.eye(3)
    with pytest.raises(F.ConditioningError):
        F.chol_with_jitter(bad, label="test block")


@given(seed=st.integers(0, 10_000))
@settings(deadline=None, max_examples=20)
def test_schur_diag_clamps_roundoff_negatives(seed):
    rng = np.random.default_rng(seed)
    k = rng.uniform(0.5, 2.0, size=6)
    q = k - rng.uniform(0.0, 0.4, size=6)
    diag = np.asarray(F.schur_diag(k, q))
    assert np.max(np.abs(diag - (k - q))) < 1e-14
    # roundoff-scale negatives are clamped to zero, real ones kept
    clamped = np.asarray(F.schur_diag(np.array([1.0]), np.array([1.0 + 1e-12])))
    assert clamped[0] == 0.0
    kept = np.asarray(F.schur_diag(np.array([1.0]), np.array([1.5])))
    assert kept[0] == pytest.approx(-0.5)


def test_schur_full_symmetrizes(rng):
    A = rng.normal(size=(5, 5))
    K = A @ A.T + 5 * np.eye(5)
    Q = rng.normal(size=(5, 5))
    C = np.asarray(F.schur_full(K, Q))
    assert np.max(np.abs(C - C.T)) == 0.0

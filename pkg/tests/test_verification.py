import numpy as np
import pytest
from scipy import stats

from provmark.errors import (CalibrationMissingError, FormatError, ParameterError)
from provmark.verification import (CalibrationModels, Classification,
                                   PcaGaussianModel, VanillaThreshold,
                                   calibrate_vanilla, chi_square_quantile,
                                   fit_pca_gaussian, ks_against_chi_square,
                                   load_models, robust_verify, save_models)


def test_vanilla_hand_fit():
    thr = calibrate_vanilla(np.array([2.0, 4.0]), alpha=0.025)
    assert thr.fit_mean == pytest.approx(3.0)
    assert thr.fit_std == pytest.approx(np.sqrt(2.0))
    expected_tau = 3.0 + np.sqrt(2.0) * stats.norm.ppf(0.025)
    assert thr.tau == pytest.approx(expected_tau, rel=1e-12)


def test_vanilla_lower_tail_direction():
    # alpha < 0.5 puts tau below the fitted mean: most invalids rejected
    thr = calibrate_vanilla(np.array([3.0, 3.5, 4.0, 4.5]), alpha=0.001)
    assert thr.tau < thr.fit_mean


def test_vanilla_empirical_false_accept_rate():
    rng = np.random.default_rng(0)
    fit = rng.normal(5.0, 0.5, size=2000)
    thr = calibrate_vanilla(fit, alpha=0.01)
    fresh = rng.normal(5.0, 0.5, size=50_000)
    rate = np.mean(fresh < thr.tau)
    assert rate == pytest.approx(0.01, abs=0.004)


def test_vanilla_boundary_rejects():
    thr = VanillaThreshold(tau=1.5, alpha=0.01, fit_mean=3, fit_std=1, n_fit=10)
    assert thr.accepts(1.4999)
    assert not thr.accepts(1.5)
    assert not thr.accepts(2.0)


def test_vanilla_validation():
    with pytest.raises(ParameterError):
        calibrate_vanilla(np.array([1.0]), 0.01)
    with pytest.raises(ParameterError):
        calibrate_vanilla(np.array([1.0, 2.0]), 0.7)
    with pytest.raises(ParameterError):
        calibrate_vanilla(np.array([2.0, 2.0]), 0.01)


def test_chi_square_quantile_reference():
    # k=2 closed form: -2 ln(alpha)
    q = chi_square_quantile(0.05, 2)
    assert q == pytest.approx(-2.0 * np.log(0.05), rel=1e-12)
    assert q == pytest.approx(5.991464547, abs=1e-6)
    assert np.sqrt(q) == pytest.approx(2.4477, abs=1e-3)


def _synthetic_pool(rng, n, d=64, scales=(3.0, 1.0), noise=1e-3):
    basis, _ = np.linalg.qr(rng.standard_normal((d, 2)))
    z = rng.standard_normal((n, 2)) * np.asarray(scales)
    flat = z @ basis.T + 0.7 + noise * rng.standard_normal((n, d))
    return flat.reshape(n, 1, 8, d // 8), basis


def test_pca_fit_recovers_subspace():
    rng = np.random.default_rng(3)
    pool, basis = _synthetic_pool(rng, 400)
    model = fit_pca_gaussian(pool, k=2, alpha=0.05)
    # fitted components span the planted basis
    overlap = np.linalg.svd(model.components @ basis)[1]
    assert np.all(overlap > 0.999)
    assert model.tau_sq == pytest.approx(5.991464547, abs=1e-6)


def test_pca_fit_distances_chi_square_on_holdout():
    rng = np.random.default_rng(4)
    pool, basis = _synthetic_pool(rng, 400)
    model = fit_pca_gaussian(pool, k=2)
    hold, _ = _synthetic_pool(rng, 600)
    # holdout must come from the same embedding to be exchangeable
    d2 = model.mahalanobis_sq(pool)
    assert d2.shape == (400,)
    assert np.mean(d2) == pytest.approx(2.0, rel=0.2)
    stat, p = ks_against_chi_square(d2, 2)
    assert p > 0.01


def test_pca_abnormal_rate_near_alpha():
    rng = np.random.default_rng(5)
    pool, basis = _synthetic_pool(rng, 3000)
    model = fit_pca_gaussian(pool[:1500], k=2, alpha=0.05)
    d2 = model.mahalanobis_sq(pool[1500:])
    rate = np.mean(d2 > model.tau_sq)
    assert rate == pytest.approx(0.05, abs=0.02)


def test_pca_outlier_distance_large():
    rng = np.random.default_rng(6)
    pool, basis = _synthetic_pool(rng, 300)
    model = fit_pca_gaussian(pool, k=2)
    outlier = pool[0] + (20.0 * basis[:, 0]).reshape(pool.shape[1:])
    assert model.mahalanobis_sq(outlier) > 30.0


def test_pca_fit_validation():
    rng = np.random.default_rng(7)
    pool = rng.standard_normal((4, 1, 4, 4))
    with pytest.raises(ParameterError):
        fit_pca_gaussian(pool[:2], k=2)
    with pytest.raises(ParameterError):
        fit_pca_gaussian(pool, k=0)


def _toy_models(tau_vanilla=1.0, tau_det=5.991464547, tau_own=5.991464547):
    mk = lambda tau_sq: PcaGaussianModel(
        mean=np.zeros(4), components=np.eye(4)[:2], proj_mean=np.zeros(2),
        proj_cov=np.eye(2), alpha=0.05, tau_sq=tau_sq, n_fit=10)
    vanilla = VanillaThreshold(tau=tau_vanilla, alpha=1e-3,
                               fit_mean=4.0, fit_std=1.0, n_fit=10)
    return vanilla, mk(tau_det), mk(tau_own)


def test_decision_table_benign():
    vanilla, det, own = _toy_models()
    rep = robust_verify(np.full((1, 2, 2), 0.1), vanilla, det, own)
    assert rep.classification is Classification.BENIGN
    assert rep.ownership_affirmed and not rep.attack_flagged


def test_decision_table_vanilla_fail_wins():
    vanilla, det, own = _toy_models()
    rep = robust_verify(np.full((1, 2, 2), 10.0), vanilla, det, own)
    assert rep.classification is Classification.INVALID_OR_NONWATERMARKED
    assert not rep.ownership_affirmed and rep.attack_flagged


def test_decision_table_spoofed():
    vanilla, det, own = _toy_models(tau_own=0.5)
    delta = np.array([0.9, 0.0, 0.0, 0.0]).reshape(1, 2, 2)
    rep = robust_verify(delta, vanilla, det, own)
    assert rep.vanilla_pass
    assert rep.d2_ownership == pytest.approx(0.81)
    assert rep.classification is Classification.SPOOFED_REJECTED
    assert not rep.ownership_affirmed and rep.attack_flagged


def test_decision_table_removal():
    vanilla, det, own = _toy_models(tau_det=0.5)
    delta = np.array([0.9, 0.0, 0.0, 0.0]).reshape(1, 2, 2)
    rep = robust_verify(delta, vanilla, det, own)
    assert rep.classification is Classification.REMOVAL_ATTACKED_OWNED
    assert rep.ownership_affirmed and rep.attack_flagged


def test_spoof_check_precedes_removal():
    vanilla, det, own = _toy_models(tau_det=0.5, tau_own=0.5)
    delta = np.array([0.9, 0.0, 0.0, 0.0]).reshape(1, 2, 2)
    rep = robust_verify(delta, vanilla, det, own)
    assert rep.classification is Classification.SPOOFED_REJECTED


def test_verdict_as_dict_round_trips_enum():
    vanilla, det, own = _toy_models()
    rep = robust_verify(np.full((1, 2, 2), 0.1), vanilla, det, own)
    d = rep.as_dict()
    assert d["classification"] == "benign"
    assert d["distance_ownership"] == pytest.approx(np.sqrt(rep.d2_ownership))


def test_models_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(8)
    pool, _ = _synthetic_pool(rng, 200)
    det = fit_pca_gaussian(pool[:100], k=2, alpha=0.05)
    own = fit_pca_gaussian(pool[100:], k=2, alpha=0.05)
    vanilla = calibrate_vanilla(rng.normal(4, 0.3, 200), alpha=1e-3)
    models = CalibrationModels(vanilla=vanilla, detection=det, ownership=own,
                               provenance={"schedule_hash": "abc", "predictor_hash": "def"})
    path = tmp_path / "models.paim"
    save_models(path, models)
    back = load_models(path)
    assert back.vanilla.tau == pytest.approx(vanilla.tau, rel=1e-12)
    assert np.allclose(back.detection.components, det.components)
    assert np.allclose(back.ownership.proj_cov, own.proj_cov)
    assert back.provenance["schedule_hash"] == "abc"
    # identical verdicts from the reloaded models
    delta = pool[0]
    a = robust_verify(delta, vanilla, det, own)
    b = robust_verify(delta, back.vanilla, back.detection, back.ownership)
    assert a.classification == b.classification
    assert a.d2_detection == pytest.approx(b.d2_detection, rel=1e-10)


def test_models_missing_file():
    with pytest.raises(CalibrationMissingError):
        load_models("/nonexistent/models.paim")


def test_models_wrong_kind(tmp_path):
    from provmark.tensorio import save_model_file
    path = tmp_path / "other.paim"
    save_model_file(path, {"kind": "something_else"}, {})
    with pytest.raises(FormatError):
        load_models(path)

"""End-to-end flows on a scaled-down config so the suite stays fast.

The tiny pipeline keeps every structural element of the default one
(mixture prior with a dc band, deflected early steps, full calibration
recipe) but shrinks the schedule, latent and pool sizes.  Rates fitted
at this scale are noisy, so assertions here check separations and
bookkeeping, not the tuned operating numbers.
"""

import numpy as np
import pytest

from provmark.config import (BenchSpec, CalibrationSpec, KeyExtractionSpec,
                             LocalizationSpec, MixtureSpec, PcaAttackSpec,
                             PoolSpec, RunConfig, ScheduleSpec)
from provmark.keys import generate_key
from provmark.verification import Classification
from provmark.workflows import (CSV_COLUMNS, Pipeline, bias_batch,
                                evaluate_vanilla_rates, generate_plain,
                                generate_watermarked, localize_image,
                                run_attack_bench, run_calibration,
                                run_localization_bench, verify_image)


def tiny_config() -> RunConfig:
    return RunConfig(
        latent_shape=(1, 8, 8),
        schedule=ScheduleSpec(num_steps=6),
        mixture=MixtureSpec(n_components=2, dc_offsets=(-0.1, 0.0, 0.1)),
        calibration=CalibrationSpec(
            n_detection=40, n_holdout=20, n_invalid=10, n_plain=10,
            n_pattern_pool=40,
            pool=PoolSpec(n_clean=8, n_per_degradation=2,
                          jpeg_qualities=(45, 25), n_per_jpeg=2,
                          subtraction_ladder=(0.1, 0.5), n_per_subtraction=3,
                          renoise_sigmas=(0.5,), n_per_renoise=4)),
        bench=BenchSpec(n_per_setting=6, spoof_strengths=(0.5, 1.0),
                        key_extraction=KeyExtractionSpec(n_targets=2, n_iters=2),
                        pca_attack=PcaAttackSpec(n_targets=1, n_iters=2)),
        localization=LocalizationSpec(baseline_n=10, tamper_ratios=(0.25,),
                                      n_tampered=3, n_untampered=3))


@pytest.fixture(scope="module")
def pipeline():
    return Pipeline.from_config(tiny_config())


@pytest.fixture(scope="module")
def alice(pipeline):
    return generate_key("alice", pipeline.shape, np.random.default_rng(0))


@pytest.fixture(scope="module")
def calibrated(pipeline, alice):
    return run_calibration(pipeline, alice, np.random.default_rng(0))


# ---- generation ----------------------------------------------------------

def test_generation_is_deterministic_per_timestamp(pipeline, alice):
    a = generate_watermarked(pipeline, alice, np.array([10, 11]))
    b = generate_watermarked(pipeline, alice, np.array([10, 11]))
    assert a.shape == (2,) + pipeline.shape
    assert np.array_equal(a, b)


def test_different_keys_generate_different_images(pipeline, alice):
    bob = generate_key("bob", pipeline.shape, np.random.default_rng(99))
    a = generate_watermarked(pipeline, alice, np.array([10]))
    b = generate_watermarked(pipeline, bob, np.array([10]))
    assert np.max(np.abs(a - b)) > 0.01


def test_plain_generation_shape(pipeline):
    out = generate_plain(pipeline, 3, np.random.default_rng(1))
    assert out.shape == (3,) + pipeline.shape


def test_valid_bias_is_small(pipeline, alice):
    # the 6-step schedule reconstructs coarsely, so the bar sits well above
    # the default pipeline's ~0.01 but far below any wrong-key moment (~2)
    stamps = np.array([20, 21, 22])
    images = generate_watermarked(pipeline, alice, stamps)
    bias = bias_batch(pipeline, images, alice, stamps)
    assert np.all(np.asarray(bias.second_moment) < 0.5)


# ---- calibration ---------------------------------------------------------

def test_calibration_separates_valid_from_invalid(calibrated):
    d = calibrated.diagnostics
    assert d["valid_moment_max"] < d["tau_vanilla"] < d["invalid_moment_min"]
    assert d["fpr_invalid"] == 0.0 and d["fpr_plain"] == 0.0


def test_calibration_diagnostics_complete(calibrated, pipeline):
    d = calibrated.diagnostics
    for key in ("ks_stat", "ks_pvalue", "abnormal_rate", "tau_vanilla",
                "ownership_pool_total", "ownership_eigenvalues",
                "out_of_range_fraction"):
        assert key in d
    assert d["ownership_pool_total"] == pipeline.config.calibration.pool.total
    assert all(v > 0 for v in d["ownership_eigenvalues"])
    assert 0.0 <= d["abnormal_rate"] <= 0.5


def test_calibration_records_provenance(calibrated, pipeline):
    assert calibrated.models.provenance == pipeline.provenance()
    assert calibrated.baseline.provenance == pipeline.provenance()


# ---- per-image verification ----------------------------------------------

def test_valid_image_passes_vanilla(pipeline, alice, calibrated):
    image = generate_watermarked(pipeline, alice, np.array([30]))[0]
    report = verify_image(pipeline, alice, image, 30, calibrated.models)
    assert report.vanilla_pass
    assert report.classification is not Classification.INVALID_OR_NONWATERMARKED


def test_wrong_key_claim_is_invalid(pipeline, alice, calibrated):
    image = generate_watermarked(pipeline, alice, np.array([31]))[0]
    mallory = generate_key("mallory", pipeline.shape, np.random.default_rng(7))
    report = verify_image(pipeline, mallory, image, 31, calibrated.models)
    assert not report.vanilla_pass
    assert report.classification is Classification.INVALID_OR_NONWATERMARKED


def test_plain_image_claim_is_invalid(pipeline, alice, calibrated):
    image = generate_plain(pipeline, 1, np.random.default_rng(3))[0]
    report = verify_image(pipeline, alice, image, 32, calibrated.models)
    assert not report.vanilla_pass


def test_localize_reports_tamper_scores(pipeline, alice, calibrated):
    from provmark.attacks import tamper_patch
    image = generate_watermarked(pipeline, alice, np.array([40]))[0]
    tampered, truth = tamper_patch(image, 0.25, np.random.default_rng(5))
    rep = localize_image(pipeline, alice, tampered, 40, calibrated.baseline,
                         truth=truth)
    assert rep.magnitude.shape == pipeline.shape[1:]
    assert rep.mask.dtype == bool
    assert set(rep.scores) == {"iou", "precision", "recall", "f1"}
    d = rep.as_dict()
    assert d["flagged"] == rep.flagged
    assert d["tampered_pixels"] == int(rep.mask.sum())


# ---- benches -------------------------------------------------------------

def test_attack_bench_covers_surface(pipeline, alice, calibrated):
    report = run_attack_bench(pipeline, alice, calibrated.models,
                              np.random.default_rng(1))
    expected = {"benign", "displacement", "clean_target_spoof",
                "metadata_tamper", "key_extraction", "pca_removal", "pca_spoof"}
    expected |= {f"{k}_L{l}" for k in ("jpeg_like", "gaussian_noise",
                                       "gaussian_blur", "brightness")
                 for l in (1, 2, 3)}
    expected |= {f"spoof_s{s}" for s in pipeline.config.bench.spoof_strengths}
    assert expected <= set(report.summary)
    assert report.rows and all(set(CSV_COLUMNS) <= set(r) for r in report.rows)
    disp = report.summary["displacement"]
    assert set(disp) == {"removal_centroid_z1", "spoof_centroid_z1",
                         "opposite_sides"}
    assert report.summary["pca_removal"]["linf"] <= pipeline.config.bench.pca_attack.epsilon + 1e-9
    ke = report.summary["key_extraction"]
    assert len(ke) and ke["true_key_moment_mean"] < ke["final_moment_mean"]


def test_attack_bench_can_skip_optimization(pipeline, alice, calibrated):
    report = run_attack_bench(pipeline, alice, calibrated.models,
                              np.random.default_rng(1),
                              include_optimization=False)
    assert "key_extraction" not in report.summary
    assert "pca_removal" not in report.summary


def test_localization_bench_shape(pipeline, alice, calibrated):
    out = run_localization_bench(pipeline, alice, calibrated.baseline,
                                 np.random.default_rng(2))
    assert set(out["per_ratio"]) == {"0.25"}
    cell = out["per_ratio"]["0.25"]
    assert 0.0 <= cell["auc_median"] <= 1.0
    assert 0.0 <= cell["iou_median"] <= 1.0
    # single ratio, so the pooled row collapses onto it
    assert out["pooled"] == dict(cell, n=cell["n"])
    assert 0.0 <= out["untampered_within_1pct_rate"] <= 1.0


def test_vanilla_rates_separate(pipeline, alice, calibrated):
    out = evaluate_vanilla_rates(pipeline, alice, 20, calibrated.models,
                                 np.random.default_rng(4))
    assert out["tpr"] == 1.0
    assert out["fpr_wrong_key"] <= 0.2
    assert out["fpr_plain"] <= 0.2
    assert out["invalid_moment_mean"] > 10 * out["valid_moment_mean"]
    assert out["plain_moment_mean"] > 10 * out["valid_moment_mean"]

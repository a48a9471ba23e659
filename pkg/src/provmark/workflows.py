"""End-to-end flows: generate, calibrate, verify, localize, bench.

Everything here is glue; the statistics live in the core modules.  The
calibration recipe, pool composition and bench layout were tuned as one
unit against the default RunConfig, so the functions take a config and
follow it rather than exposing every knob again.

Timestamp ranges are blocked out per purpose so no two corpora reuse a
salt; user-facing generation takes wall-clock seconds, far above any of
the reserved blocks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .attacks import (all_degradations, degrade, jpeg_like,
                      key_extraction_attack, pattern_spoof,
                      pca_space_attack, quality_to_qtable, tamper_patch)
from .config import RunConfig
from .errors import ParameterError
from .inversion import InitializationBias, compute_bias
from .keys import UserKey, generate_key, initialize_noise, make_salt
from .localization import (IntrinsicBiasBaseline, build_baseline, field_auc,
                           mask_scores, refine_mask, response_magnitude,
                           tamper_response, RefineParams)
from .sampling import DeflectionConfig, run_denoise
from .schedule import DiffusionSchedule
from .verification import (CalibrationModels, Classification, VerdictReport,
                           calibrate_vanilla, fit_pca_gaussian,
                           ks_against_chi_square, robust_verify)

# reserved timestamp blocks (generation salts are timestamp-keyed)
STAMP_DETECTION_FIT = 1_000_000
STAMP_BENCH = 1_200_000
STAMP_OWNERSHIP = 1_300_000
STAMP_HOLDOUT = 1_500_000
STAMP_PLAIN_CLAIM = 2_000_000
STAMP_CLEAN_TARGET = 2_100_000
STAMP_PATTERN = 3_000_000
STAMP_LOCALIZATION = 4_000_000
STAMP_EVALUATION = 5_000_000


@dataclass(frozen=True)
class Pipeline:
    """Schedule, predictor and deflection built once from a config."""

    config: RunConfig
    schedule: DiffusionSchedule
    predictor: object
    deflection: DeflectionConfig

    @classmethod
    def from_config(cls, config: RunConfig | None = None) -> "Pipeline":
        config = config if config is not None else RunConfig()
        schedule = config.build_schedule()
        return cls(config=config, schedule=schedule,
                   predictor=config.build_predictor(schedule),
                   deflection=config.build_deflection(schedule))

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(self.config.latent_shape)

    def provenance(self) -> dict:
        return {"schedule_hash": self.schedule.content_hash(),
                "predictor_hash": self.predictor.content_hash()}


# --------------------------------------------------------------------------
# generation and per-image verification

def generate_watermarked(pipeline: Pipeline, key: UserKey,
                         timestamps: np.ndarray) -> np.ndarray:
    """One keyed image per timestamp, canonical (unclipped) pixels."""
    timestamps = np.atleast_1d(np.asarray(timestamps, dtype=np.int64))
    starts = np.stack([initialize_noise(key, make_salt(int(t), pipeline.shape))
                       for t in timestamps])
    return run_denoise(starts, pipeline.predictor, pipeline.schedule,
                       pipeline.deflection, key=key.tensor)


def generate_plain(pipeline: Pipeline, n: int, rng: np.random.Generator) -> np.ndarray:
    """Unkeyed generations from fresh Gaussian starts."""
    starts = rng.standard_normal((n,) + pipeline.shape)
    return run_denoise(starts, pipeline.predictor, pipeline.schedule)


def bias_batch(pipeline: Pipeline, images: np.ndarray, key: UserKey | np.ndarray,
               timestamps: np.ndarray | int) -> InitializationBias:
    return compute_bias(images, key, timestamps, pipeline.predictor,
                        pipeline.schedule, pipeline.deflection)


def verify_image(pipeline: Pipeline, key: UserKey, image: np.ndarray,
                 timestamp: int, models: CalibrationModels) -> VerdictReport:
    bias = bias_batch(pipeline, image, key, int(timestamp))
    return robust_verify(bias.delta, models.vanilla, models.detection,
                         models.ownership)


@dataclass(frozen=True)
class LocalizationReport:
    magnitude: np.ndarray       # (H, W) response strength
    mask: np.ndarray            # (H, W) bool
    flagged: bool
    scores: dict | None = None  # vs truth, when one was supplied

    def as_dict(self) -> dict:
        out = {"flagged": self.flagged,
               "tampered_pixels": int(self.mask.sum()),
               "mask": self.mask.astype(int).tolist()}
        if self.scores is not None:
            out["scores"] = self.scores
        return out


def localize_image(pipeline: Pipeline, key: UserKey, image: np.ndarray,
                   timestamp: int, baseline: IntrinsicBiasBaseline,
                   refine: RefineParams = RefineParams(),
                   truth: np.ndarray | None = None) -> LocalizationReport:
    bias = bias_batch(pipeline, image, key, int(timestamp))
    response = tamper_response(bias.delta, baseline)
    mask = refine_mask(response, refine)
    return LocalizationReport(
        magnitude=response_magnitude(response), mask=mask,
        flagged=bool(mask.any()),
        scores=mask_scores(mask, truth) if truth is not None else None)


# --------------------------------------------------------------------------
# calibration

@dataclass(frozen=True)
class CalibrationResult:
    models: CalibrationModels
    baseline: IntrinsicBiasBaseline
    diagnostics: dict


def run_calibration(pipeline: Pipeline, key: UserKey, rng: np.random.Generator,
                    log=None) -> CalibrationResult:
    """Fit both verification stages and the localization baseline.

    The ownership pool mixes untouched samples, the graded degradations,
    and three widener families (jpeg quality curve, pattern-subtraction
    ladder, heavy renoising) whose sizes come from the config.  Widths
    matter: the pool must be broad enough that graded wear projects
    inside the fitted Gaussian yet narrow enough that an added forged
    pattern, displacing the opposite way, does not.
    """
    say = log if log is not None else (lambda *_: None)
    cal = pipeline.config.calibration
    shape = pipeline.shape

    def gen_wm(stamps):
        return generate_watermarked(pipeline, key, stamps)

    def bias_of(images, stamps):
        return bias_batch(pipeline, images, key, stamps)

    # detection fit and holdout
    fit_stamps = np.arange(STAMP_DETECTION_FIT, STAMP_DETECTION_FIT + cal.n_detection)
    det = fit_pca_gaussian(bias_of(gen_wm(fit_stamps), fit_stamps).delta,
                           k=cal.pca_k, alpha=cal.alpha_robust,
                           ridge_scale=cal.ridge_scale)
    hold_stamps = np.arange(STAMP_HOLDOUT, STAMP_HOLDOUT + cal.n_holdout)
    wm_hold = gen_wm(hold_stamps)
    hold_bias = bias_of(wm_hold, hold_stamps)
    hold_d2 = det.mahalanobis_sq(hold_bias.delta)
    ks_stat, ks_pvalue = ks_against_chi_square(hold_d2, cal.pca_k)
    abnormal_rate = float(np.mean(hold_d2 > det.tau_sq))
    say(f"detection fit n={cal.n_detection}: holdout KS {ks_stat:.3f} "
        f"p {ks_pvalue:.3f}, abnormal rate {abnormal_rate:.3f}")

    # pattern pools feed the subtraction ladder (and nothing else here)
    pat_stamps = np.arange(STAMP_PATTERN, STAMP_PATTERN + cal.n_pattern_pool)
    wm_pool = gen_wm(pat_stamps)
    plain_pool = generate_plain(pipeline, cal.n_pattern_pool, rng)

    # ownership pool
    pool = cal.pool
    own_stamps = np.arange(STAMP_OWNERSHIP, STAMP_OWNERSHIP + pool.total)
    wm_own = gen_wm(own_stamps)
    # pool noise comes from slice-keyed rngs, not the caller's stream, so a
    # refit with any seed lands on the same ownership ellipse for a given key
    parts, pos = [wm_own[:pool.n_clean]], pool.n_clean
    for kind, level in all_degradations():
        if kind == "jpeg_like":
            continue                      # replaced by the quality curve below
        seg = wm_own[pos:pos + pool.n_per_degradation]
        parts.append(degrade(seg, kind, level, np.random.default_rng(11 + pos)))
        pos += pool.n_per_degradation
    for q in pool.jpeg_qualities:
        seg = wm_own[pos:pos + pool.n_per_jpeg]
        parts.append(jpeg_like(seg, quality_to_qtable(q)))
        pos += pool.n_per_jpeg
    for s in pool.subtraction_ladder:
        seg = wm_own[pos:pos + pool.n_per_subtraction]
        parts.append(pattern_spoof(wm_pool, plain_pool, seg, strength=-s))
        pos += pool.n_per_subtraction
    for sigma_r in pool.renoise_sigmas:
        seg = wm_own[pos:pos + pool.n_per_renoise]
        widener = np.random.default_rng(int(sigma_r * 100))
        parts.append(np.clip(seg + sigma_r * widener.standard_normal(seg.shape),
                             0.0, 1.0))
        pos += pool.n_per_renoise
    own_bias = bias_of(np.concatenate(parts), own_stamps)
    ownership = fit_pca_gaussian(own_bias.delta, k=cal.pca_k, alpha=cal.alpha_robust,
                                 ridge_scale=cal.ridge_scale)
    say(f"ownership fit on pool of {pool.total}")

    # vanilla threshold from wrong-key and plain moments jointly
    wrong_key = generate_key("_calibration_wrong_key", shape, rng)
    invalid_bias = compute_bias(wm_pool[:cal.n_invalid], wrong_key,
                                pat_stamps[:cal.n_invalid], pipeline.predictor,
                                pipeline.schedule, pipeline.deflection)
    plain_stamps = np.arange(STAMP_PLAIN_CLAIM, STAMP_PLAIN_CLAIM + cal.n_plain)
    plain_bias = bias_of(plain_pool[:cal.n_plain], plain_stamps)
    vanilla = calibrate_vanilla(
        np.concatenate([np.atleast_1d(invalid_bias.second_moment),
                        np.atleast_1d(plain_bias.second_moment)]),
        cal.alpha_vanilla)
    say(f"vanilla threshold {vanilla.tau:.3f}")

    provenance = pipeline.provenance()
    # fixed stream for the same reason as the pool draws above
    baseline = build_baseline(pipeline.predictor, pipeline.schedule, shape,
                              pipeline.config.localization.baseline_n,
                              np.random.default_rng(7), provenance=provenance)

    diagnostics = {
        "ks_stat": ks_stat,
        "ks_pvalue": ks_pvalue,
        "abnormal_rate": abnormal_rate,
        "tau_vanilla": vanilla.tau,
        "valid_moment_mean": float(np.mean(hold_bias.second_moment)),
        "valid_moment_max": float(np.max(hold_bias.second_moment)),
        "invalid_moment_min": float(np.min(invalid_bias.second_moment)),
        "fpr_invalid": float(np.mean(
            np.atleast_1d(invalid_bias.second_moment) < vanilla.tau)),
        "fpr_plain": float(np.mean(
            np.atleast_1d(plain_bias.second_moment) < vanilla.tau)),
        "ownership_pool_total": pool.total,
        "ownership_eigenvalues": [float(v) for v in ownership.proj_cov.diagonal()],
        "out_of_range_fraction": float(np.mean((wm_hold < 0) | (wm_hold > 1))),
    }
    models = CalibrationModels(vanilla=vanilla, detection=det,
                               ownership=ownership, provenance=provenance)
    return CalibrationResult(models=models, baseline=baseline,
                             diagnostics=diagnostics)


# --------------------------------------------------------------------------
# attack bench

@dataclass
class BenchReport:
    rows: list[dict] = field(default_factory=list)
    summary: dict = field(default_factory=dict)

CSV_COLUMNS = ("image_id", "attack_kind", "level", "vanilla_pass",
               "D2_detect", "D2_own", "classification", "owned")


def _bench_rows(kind: str, level, bias: InitializationBias,
                models: CalibrationModels, report: BenchReport,
                claimed_stamps=None) -> dict:
    """Verify each sample in a bias batch, append CSV rows, return stats."""
    deltas = bias.delta if bias.delta.ndim == 4 else bias.delta[None]
    verdicts = [robust_verify(d, models.vanilla, models.detection,
                              models.ownership) for d in deltas]
    start = len(report.rows)
    for i, v in enumerate(verdicts):
        report.rows.append({
            "image_id": f"{kind}-{level}-{start + i:04d}",
            "attack_kind": kind,
            "level": level,
            "vanilla_pass": int(v.vanilla_pass),
            "D2_detect": round(v.d2_detection, 6),
            "D2_own": round(v.d2_ownership, 6),
            "classification": v.classification.value,
            "owned": int(v.ownership_affirmed),
        })
    cell = {
        "n": len(verdicts),
        "vanilla_pass_rate": float(np.mean([v.vanilla_pass for v in verdicts])),
        "owned_rate": float(np.mean([v.ownership_affirmed for v in verdicts])),
        "detected_rate": float(np.mean(
            [v.d2_detection > v.tau_sq_detection for v in verdicts])),
        "owned_and_detected_rate": float(np.mean(
            [v.ownership_affirmed and v.d2_detection > v.tau_sq_detection
             for v in verdicts])),
        "spoof_flag_rate": float(np.mean(
            [v.classification is Classification.SPOOFED_REJECTED for v in verdicts])),
        "median_d2_own": float(np.median([v.d2_ownership for v in verdicts])),
        "median_second_moment": float(np.median([v.second_moment for v in verdicts])),
    }
    return cell


def _pool_slice(pool: np.ndarray, start: int, n: int) -> np.ndarray:
    """n consecutive samples at start, shifted back if the pool is short."""
    if len(pool) < n:
        raise ParameterError(f"pool of {len(pool)} cannot supply {n} targets")
    start = min(start, len(pool) - n)
    return pool[start:start + n]


def _z1_median(deltas: np.ndarray, models: CalibrationModels) -> float:
    own = models.ownership
    z = (own.project(deltas) - own.proj_mean) / np.sqrt(own.proj_cov.diagonal())
    return float(np.median(z[:, 0]))


def run_attack_bench(pipeline: Pipeline, key: UserKey,
                     models: CalibrationModels, rng: np.random.Generator,
                     log=None, include_optimization: bool = True) -> BenchReport:
    """Exercise the verifier against the whole attack surface.

    Degradations and spoofs are batch cells; the optimization attacks
    (key extraction, verifier-plane pushes) run on a handful of targets
    because every gradient is finite-differenced through the full
    inversion.  ``include_optimization=False`` skips them for quick runs.
    """
    say = log if log is not None else (lambda *_: None)
    bench = pipeline.config.bench
    report = BenchReport()
    n = bench.n_per_setting

    test_stamps = np.arange(STAMP_BENCH, STAMP_BENCH + n)
    wm_test = generate_watermarked(pipeline, key, test_stamps)
    pat_stamps = np.arange(STAMP_PATTERN, STAMP_PATTERN + pipeline.config.calibration.n_pattern_pool)
    wm_pool = generate_watermarked(pipeline, key, pat_stamps)
    plain_pool = generate_plain(pipeline, pipeline.config.calibration.n_pattern_pool, rng)

    def bias_of(images, stamps):
        return bias_batch(pipeline, images, key, stamps)

    benign_bias = bias_of(wm_test, test_stamps)
    report.summary["benign"] = _bench_rows("none", 0, benign_bias, models, report)
    benign_z1 = _z1_median(benign_bias.delta, models)
    say(f"benign owned {report.summary['benign']['owned_rate']:.2f}")

    removal_z1 = []
    for kind, level in all_degradations():
        b = bias_of(degrade(wm_test, kind, level, rng), test_stamps)
        cell = _bench_rows(kind, level, b, models, report)
        removal_z1.append(_z1_median(b.delta, models))
        say(f"{kind} L{level}: owned {cell['owned_rate']:.2f} "
            f"det {cell['detected_rate']:.2f}")
        report.summary[f"{kind}_L{level}"] = cell

    spoof_z1 = benign_z1
    for strength in bench.spoof_strengths:
        forged = pattern_spoof(wm_pool, plain_pool, wm_test, strength=strength)
        b = bias_of(forged, test_stamps)
        cell = _bench_rows("pattern_spoof", strength, b, models, report)
        if strength == bench.graded_spoof_strength:
            spoof_z1 = _z1_median(b.delta, models)
        say(f"spoof({strength}): flagged {cell['spoof_flag_rate']:.2f}")
        report.summary[f"spoof_s{strength}"] = cell

    # displacement geometry: removal and spoofing leave on opposite sides
    rem_shift = float(np.mean(removal_z1) - benign_z1)
    spoof_shift = spoof_z1 - benign_z1
    report.summary["displacement"] = {
        "removal_centroid_z1": rem_shift,
        "spoof_centroid_z1": spoof_shift,
        "opposite_sides": bool(np.sign(rem_shift) != np.sign(spoof_shift)),
    }

    # forged pattern on never-watermarked content
    clean_targets = _pool_slice(plain_pool, 300, n)
    clean_stamps = np.arange(STAMP_CLEAN_TARGET, STAMP_CLEAN_TARGET + n)
    b = bias_of(pattern_spoof(wm_pool, plain_pool, clean_targets,
                              strength=bench.graded_spoof_strength),
                clean_stamps)
    report.summary["clean_target_spoof"] = _bench_rows(
        "clean_target_spoof", bench.graded_spoof_strength, b, models, report)

    # timestamp swap: wrong salt, so the rebuilt reference cannot match
    swapped = test_stamps + 777_000
    b = bias_of(wm_test, swapped)
    report.summary["metadata_tamper"] = _bench_rows(
        "metadata_tamper", "timestamp_swap", b, models, report)
    say(f"metadata tamper vanilla pass "
        f"{report.summary['metadata_tamper']['vanilla_pass_rate']:.2f}")

    if include_optimization:
        _optimization_attacks(pipeline, key, models, wm_test, test_stamps,
                              plain_pool, rng, report, say)
    return report


def _optimization_attacks(pipeline, key, models, wm_test, test_stamps,
                          plain_pool, rng, report, say):
    bench = pipeline.config.bench
    ke = bench.key_extraction
    targets = wm_test[:ke.n_targets]
    target_stamps = test_stamps[:ke.n_targets]

    result = key_extraction_attack(targets, target_stamps, pipeline.predictor,
                                   pipeline.schedule, pipeline.deflection, rng,
                                   n_iters=ke.n_iters, step_size=ke.step_size,
                                   fd_eps=ke.fd_eps, reg=ke.reg)
    extracted_bias = compute_bias(targets, result.key, target_stamps,
                                  pipeline.predictor, pipeline.schedule,
                                  pipeline.deflection)
    cell = _bench_rows("key_extraction", ke.n_iters, extracted_bias, models, report)
    # sanity anchor: the loss landscape is informative at the true key
    true_init = key_extraction_attack(targets, target_stamps, pipeline.predictor,
                                      pipeline.schedule, pipeline.deflection, rng,
                                      n_iters=2, step_size=ke.step_size,
                                      fd_eps=ke.fd_eps, reg=ke.reg,
                                      init_key=key.tensor)
    cell.update({
        "loss_first": result.loss_history[0],
        "loss_last": result.loss_history[-1],
        "final_moment_mean": float(np.mean(result.final_moments)),
        "true_key_moment_mean": float(np.mean(true_init.final_moments)),
    })
    report.summary["key_extraction"] = cell
    say(f"key extraction final moment {cell['final_moment_mean']:.3f} "
        f"(true-key anchor {cell['true_key_moment_mean']:.4f})")

    pa = bench.pca_attack
    eve = generate_key("_bench_adversary", pipeline.shape, rng)

    # removal flavor: push watermarked images toward the plain-content
    # centroid in the detection plane, then verify under the real key
    n_proj = min(200, len(plain_pool))
    plain_bias = bias_batch(pipeline, plain_pool[:n_proj],
                            key, np.arange(STAMP_PLAIN_CLAIM, STAMP_PLAIN_CLAIM + n_proj))
    plain_centroid = models.detection.project(plain_bias.delta).mean(axis=0)
    base = np.clip(wm_test[:pa.n_targets], 0.0, 1.0)
    removal = pca_space_attack(base, eve.tensor, test_stamps[:pa.n_targets],
                               pipeline.predictor, pipeline.schedule,
                               pipeline.deflection, models.detection,
                               plain_centroid, epsilon=pa.epsilon, lam=pa.lam,
                               n_iters=pa.n_iters)
    b = bias_batch(pipeline, removal.images, key, test_stamps[:pa.n_targets])
    cell = _bench_rows("pca_removal", pa.epsilon, b, models, report)
    cell["linf"] = removal.linf
    report.summary["pca_removal"] = cell
    say(f"pca removal: owned {cell['owned_rate']:.2f} det {cell['detected_rate']:.2f} "
        f"linf {removal.linf:.4f}")

    # spoof flavor: push plain images toward the benign centroid, then
    # claim them under the adversary's key
    spoof_stamps = np.arange(STAMP_CLEAN_TARGET + 900, STAMP_CLEAN_TARGET + 900 + pa.n_targets)
    base = np.clip(_pool_slice(plain_pool, 600, pa.n_targets), 0.0, 1.0)
    spoof = pca_space_attack(base, eve.tensor, spoof_stamps,
                             pipeline.predictor, pipeline.schedule,
                             pipeline.deflection, models.detection,
                             models.detection.proj_mean, epsilon=pa.epsilon,
                             lam=pa.lam, n_iters=pa.n_iters)
    b = compute_bias(spoof.images, eve, spoof_stamps, pipeline.predictor,
                     pipeline.schedule, pipeline.deflection)
    cell = _bench_rows("pca_spoof", pa.epsilon, b, models, report)
    cell["linf"] = spoof.linf
    cell["denied_rate"] = 1.0 - cell["owned_rate"]
    report.summary["pca_spoof"] = cell
    say(f"pca spoof: denied {cell['denied_rate']:.2f} linf {spoof.linf:.4f}")


# --------------------------------------------------------------------------
# localization bench

def run_localization_bench(pipeline: Pipeline, key: UserKey,
                           baseline: IntrinsicBiasBaseline,
                           rng: np.random.Generator, log=None) -> dict:
    """Patch tampers at the configured area ratios plus an untampered row."""
    say = log if log is not None else (lambda *_: None)
    loc = pipeline.config.localization
    refine = RefineParams(**loc.refine.model_dump())

    per_ratio = {}
    all_aucs, all_ious = [], []
    stamp = STAMP_LOCALIZATION
    for ratio in loc.tamper_ratios:
        stamps = np.arange(stamp, stamp + loc.n_tampered)
        stamp += loc.n_tampered
        images = generate_watermarked(pipeline, key, stamps)
        aucs, ious = [], []
        for img, ts in zip(images, stamps):
            tampered, truth = tamper_patch(img, ratio, rng)
            rep = localize_image(pipeline, key, tampered, int(ts), baseline,
                                 refine, truth=truth)
            aucs.append(field_auc(rep.magnitude, truth))
            ious.append(rep.scores["iou"])
        all_aucs.extend(aucs)
        all_ious.extend(ious)
        per_ratio[ratio] = {
            "n": loc.n_tampered,
            "auc_median": float(np.median(aucs)),
            "auc_ge_085_rate": float(np.mean(np.asarray(aucs) >= 0.85)),
            "iou_median": float(np.median(ious)),
            "iou_ge_05_rate": float(np.mean(np.asarray(ious) >= 0.5)),
        }
        say(f"ratio {ratio:.2f}: AUC med {per_ratio[ratio]['auc_median']:.3f} "
            f"IoU med {per_ratio[ratio]['iou_median']:.3f}")
    pooled = {
        "n": len(all_aucs),
        "auc_median": float(np.median(all_aucs)),
        "auc_ge_085_rate": float(np.mean(np.asarray(all_aucs) >= 0.85)),
        "iou_median": float(np.median(all_ious)),
        "iou_ge_05_rate": float(np.mean(np.asarray(all_ious) >= 0.5)),
    }
    say(f"pooled: AUC med {pooled['auc_median']:.3f} "
        f"IoU med {pooled['iou_median']:.3f}")

    stamps = np.arange(stamp, stamp + loc.n_untampered)
    images = generate_watermarked(pipeline, key, stamps)
    flag_fracs = []
    for img, ts in zip(images, stamps):
        rep = localize_image(pipeline, key, img, int(ts), baseline, refine)
        flag_fracs.append(rep.mask.mean())
    clean_ok = float(np.mean(np.asarray(flag_fracs) <= 0.01))
    say(f"untampered within 1%: {clean_ok:.2f}")
    return {"per_ratio": {str(k): v for k, v in per_ratio.items()},
            "pooled": pooled,
            "untampered_within_1pct_rate": clean_ok,
            "n_untampered": loc.n_untampered}


# --------------------------------------------------------------------------

def evaluate_vanilla_rates(pipeline: Pipeline, key: UserKey, n: int,
                           models: CalibrationModels,
                           rng: np.random.Generator) -> dict:
    """TPR on fresh valid images; FPR under a wrong key and on plain content."""
    stamps = np.arange(STAMP_EVALUATION, STAMP_EVALUATION + n)
    images = generate_watermarked(pipeline, key, stamps)
    valid = bias_batch(pipeline, images, key, stamps)
    wrong = generate_key("_evaluation_wrong_key", pipeline.shape, rng)
    invalid = bias_batch(pipeline, images, wrong, stamps)
    plain = generate_plain(pipeline, n, rng)
    plain_stamps = np.arange(STAMP_EVALUATION + n, STAMP_EVALUATION + 2 * n)
    nonwm = bias_batch(pipeline, plain, key, plain_stamps)
    tau = models.vanilla.tau
    return {
        "n": n,
        "tpr": float(np.mean(np.atleast_1d(valid.second_moment) < tau)),
        "fpr_wrong_key": float(np.mean(np.atleast_1d(invalid.second_moment) < tau)),
        "fpr_plain": float(np.mean(np.atleast_1d(nonwm.second_moment) < tau)),
        "valid_moment_mean": float(np.mean(valid.second_moment)),
        "invalid_moment_mean": float(np.mean(invalid.second_moment)),
        "plain_moment_mean": float(np.mean(nonwm.second_moment)),
    }

"""On-disk workspace: config, keystore, fitted models, image library.

Layout under one root directory:

    config.json     run configuration (absent means built-in defaults)
    keystore.paik   registered user keys, owner-only permissions
    models.paim     calibrated verification models
    baseline.paim   intrinsic drift baseline for localization
    images/         generated images with sidecars and previews
    bench.csv       last attack bench, when one was run

The service holds exactly one of these; the CLI talks to the service.
"""

from __future__ import annotations

import csv
import os
import time
from pathlib import Path

import numpy as np

from .artifacts import (ImageSidecar, DeflectionStamp, load_image, save_image,
                        verify_provenance)
from .config import RunConfig
from .errors import ParameterError
from .keys import KeyStore
from .localization import (IntrinsicBiasBaseline, RefineParams, load_baseline,
                           save_baseline)
from .theory import theory_report
from .verification import CalibrationModels, load_models, save_models
from .workflows import (CSV_COLUMNS, Pipeline, generate_watermarked,
                        localize_image, run_attack_bench, run_calibration,
                        run_localization_bench, verify_image)


class Workspace:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.config_path = self.root / "config.json"
        self.keystore_path = self.root / "keystore.paik"
        self.models_path = self.root / "models.paim"
        self.baseline_path = self.root / "baseline.paim"
        self.images_dir = self.root / "images"
        self.images_dir.mkdir(exist_ok=True)
        self._pipeline: Pipeline | None = None

    # ---- configuration ---------------------------------------------------

    def config(self) -> RunConfig:
        if self.config_path.exists():
            return RunConfig.load(self.config_path)
        return RunConfig()

    def pipeline(self) -> Pipeline:
        if self._pipeline is None:
            self._pipeline = Pipeline.from_config(self.config())
        return self._pipeline

    # ---- keys ------------------------------------------------------------

    def keystore(self) -> KeyStore:
        if self.keystore_path.exists():
            return KeyStore.load(self.keystore_path)
        return KeyStore()

    def register_user(self, user_id: str, seed: int | None = None) -> dict:
        store = self.keystore()
        rng = np.random.default_rng(seed if seed is not None
                                    else int.from_bytes(os.urandom(8), "little"))
        key = store.register(user_id, self.pipeline().shape, rng,
                             created_at=int(time.time()))
        store.save(self.keystore_path)
        return {"user_id": user_id, "fingerprint": key.fingerprint(),
                "created_at": key.created_at, "registered_users": len(store)}

    # ---- calibration -----------------------------------------------------

    def is_calibrated(self) -> bool:
        return self.models_path.exists() and self.baseline_path.exists()

    def models(self) -> CalibrationModels:
        return load_models(self.models_path)

    def baseline(self) -> IntrinsicBiasBaseline:
        return load_baseline(self.baseline_path)

    def calibrate(self, user_id: str, seed: int = 0, log=None) -> dict:
        key = self.keystore().get(user_id)
        result = run_calibration(self.pipeline(), key,
                                 np.random.default_rng(seed), log=log)
        save_models(self.models_path, result.models)
        save_baseline(self.baseline_path, result.baseline)
        return dict(result.diagnostics, user_id=user_id, seed=seed)

    # ---- generation ------------------------------------------------------

    def generate(self, user_id: str, n: int = 1,
                 timestamps: list[int] | None = None,
                 preview: bool = False) -> dict:
        if n < 1:
            raise ParameterError("n must be positive")
        key = self.keystore().get(user_id)
        pipeline = self.pipeline()
        if timestamps is None:
            base = int(time.time())
            timestamps = [base + i for i in range(n)]
        elif len(timestamps) != n:
            raise ParameterError(f"{n} images but {len(timestamps)} timestamps")
        stamps = np.asarray(timestamps, dtype=np.int64)
        images = generate_watermarked(pipeline, key, stamps)
        prov = pipeline.provenance()
        stamp = DeflectionStamp.from_config(pipeline.deflection)
        paths = []
        for img, ts in zip(images, stamps):
            sidecar = ImageSidecar(user_id=user_id, timestamp=int(ts),
                                   schedule_hash=prov["schedule_hash"],
                                   deflection=stamp,
                                   predictor_hash=prov["predictor_hash"])
            out = self.images_dir / f"{user_id}_{int(ts)}.pait"
            paths.append(str(save_image(out, img, sidecar, preview=preview)))
        return {"user_id": user_id, "paths": paths,
                "timestamps": [int(t) for t in stamps]}

    # ---- verification ----------------------------------------------------

    def _load_for_check(self, path: str, user_id: str | None, from_preview: bool):
        pipeline = self.pipeline()
        models = self.models()
        image, sidecar = load_image(self._resolve(path), from_preview=from_preview)
        verify_provenance(sidecar, models.provenance, pipeline.deflection)
        claimed = user_id if user_id is not None else sidecar.user_id
        key = self.keystore().get(claimed)
        return pipeline, models, image, sidecar, claimed, key

    def verify(self, path: str, user_id: str | None = None,
               from_preview: bool = False) -> dict:
        pipeline, models, image, sidecar, claimed, key = self._load_for_check(
            path, user_id, from_preview)
        verdict = verify_image(pipeline, key, image, sidecar.timestamp, models)
        return dict(verdict.as_dict(), path=path, user_id=claimed,
                    timestamp=sidecar.timestamp)

    def localize(self, path: str, user_id: str | None = None) -> dict:
        pipeline, _, image, sidecar, claimed, key = self._load_for_check(
            path, user_id, False)
        refine = RefineParams(**pipeline.config.localization.refine.model_dump())
        report = localize_image(pipeline, key, image, sidecar.timestamp,
                                self.baseline(), refine)
        return dict(report.as_dict(), path=path, user_id=claimed)

    # ---- benches ---------------------------------------------------------

    def attack_bench(self, user_id: str, seed: int = 0,
                     include_optimization: bool = True,
                     csv_path: str | None = None, log=None) -> dict:
        key = self.keystore().get(user_id)
        models = self.models()
        report = run_attack_bench(self.pipeline(), key, models,
                                  np.random.default_rng(seed), log=log,
                                  include_optimization=include_optimization)
        out = Path(csv_path) if csv_path else self.root / "bench.csv"
        _write_csv(out, report.rows)
        return {"summary": report.summary, "csv_path": str(out),
                "n_rows": len(report.rows)}

    def localization_bench(self, user_id: str, seed: int = 0, log=None) -> dict:
        key = self.keystore().get(user_id)
        return run_localization_bench(self.pipeline(), key, self.baseline(),
                                      np.random.default_rng(seed), log=log)

    def theory(self, m: float = 1.1, q: float = 0.9, n_trials: int = 4000,
               seed: int = 0) -> dict:
        schedule = self.pipeline().schedule
        t_values = tuple(t for t in (1, 5, 25, 50) if t <= schedule.num_steps)
        if not t_values or t_values[-1] != schedule.num_steps:
            t_values = t_values + (schedule.num_steps,)
        return theory_report(schedule, m=m, q=q, t_values=t_values,
                             n_trials=n_trials, seed=seed)

    # ----------------------------------------------------------------------

    def _resolve(self, path: str) -> Path:
        p = Path(path)
        if not p.exists() and (self.images_dir / p.name).exists():
            return self.images_dir / p.name
        return p


def _write_csv(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)

"""JSON run configuration with strict key checking.

A config document has four optional sections. Missing keys take the defaults
below; unknown sections or keys are rejected.

.. code-block:: json

    {
      "cascade": {"d_min": null, "d_max": null, "n_views": 5, "planes": [64, 32, 8],
                  "lambda": 1.5, "beta": 10.0, "smoothing_radii": [2, 1, 1],
                  "min_interval_width": 0.1},
      "features": {"channels": [32, 16, 8], "gaussian_radii": [1.0, 2.0, 4.0],
                   "window_radii": [2, 4], "boundary": "reflect"},
      "fusion": {"max_relative_depth_diff": 0.01, "max_reprojection_dist": 1.0,
                 "min_consistent_views": 3},
      "eval": {"max_dist": null, "max_dist_units": 20.0, "gt_dedupe_cell": null,
               "histogram_bin": 0.5}
    }

``d_min``/``d_max`` of null take the range from the reference camera file.
``max_dist`` of null means ``max_dist_units`` times the stage-3 unit distance.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

from .cascade import CascadeConfig
from .errors import InputError
from .features import FeatureConfig
from .fusion import FusionConfig

DEFAULTS: dict = {
    "cascade": {
        "d_min": None,
        "d_max": None,
        "n_views": 5,
        "planes": [64, 32, 8],
        "lambda": 1.5,
        "beta": 10.0,
        "smoothing_radii": [2, 1, 1],
        "min_interval_width": 0.1,
    },
    "features": {
        "channels": [32, 16, 8],
        "gaussian_radii": [1.0, 2.0, 4.0],
        "window_radii": [2, 4],
        "boundary": "reflect",
    },
    "fusion": {
        "max_relative_depth_diff": 0.01,
        "max_reprojection_dist": 1.0,
        "min_consistent_views": 3,
    },
    "eval": {
        "max_dist": None,
        "max_dist_units": 20.0,
        "gt_dedupe_cell": None,
        "histogram_bin": 0.5,
    },
}


class ConfigError(InputError):
    """The config document violates the schema."""


@dataclass
class RunConfig:
    data: dict

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        merged = copy.deepcopy(DEFAULTS)
        for section, values in doc.items():
            if section not in DEFAULTS:
                raise ConfigError(f"unknown config section {section!r}")
            if not isinstance(values, dict):
                raise ConfigError(f"section {section!r} must be an object")
            for key, value in values.items():
                if key not in DEFAULTS[section]:
                    raise ConfigError(f"unknown key {section}.{key}")
                merged[section][key] = value
        cfg = cls(merged)
        # build every typed config once so schema errors surface at load time
        cfg.features()
        cfg.fusion()
        lo, hi = merged["cascade"]["d_min"], merged["cascade"]["d_max"]
        # stand-ins for null bounds that keep any given bound valid
        cfg.cascade(hi / 2 if _positive(hi) else 1.0, lo * 2 if _positive(lo) else 2.0)
        e = merged["eval"]
        for key in ("max_dist", "gt_dedupe_cell"):
            if e[key] is not None and not _positive(e[key]):
                raise ConfigError(f"eval.{key} must be a positive number or null")
        for key in ("max_dist_units", "histogram_bin"):
            if not _positive(e[key]):
                raise ConfigError(f"eval.{key} must be a positive number")
        return cfg

    @classmethod
    def load(cls, path=None) -> "RunConfig":
        """Defaults when ``path`` is None, else the parsed file."""
        if path is None:
            return cls.from_dict({})
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}:{e.lineno}: invalid JSON: {e.msg}") from None
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
        return cls.from_dict(doc)

    def features(self) -> FeatureConfig:
        f = self.data["features"]
        try:
            return FeatureConfig(
                tuple(int(c) for c in f["channels"]),
                tuple(float(r) for r in f["gaussian_radii"]),
                tuple(int(r) for r in f["window_radii"]),
                str(f["boundary"]),
            )
        except (TypeError, ValueError) as e:
            raise ConfigError(f"features: {e}") from None

    def fusion(self) -> FusionConfig:
        f = self.data["fusion"]
        try:
            return FusionConfig(float(f["max_relative_depth_diff"]), float(f["max_reprojection_dist"]),
                                int(f["min_consistent_views"]))
        except (TypeError, ValueError) as e:
            raise ConfigError(f"fusion: {e}") from None

    def depth_range(self) -> tuple[float | None, float | None]:
        c = self.data["cascade"]
        return c["d_min"], c["d_max"]

    def cascade(self, d_min: float, d_max: float) -> CascadeConfig:
        """The cascade config, with null range bounds filled from ``d_min``/``d_max``."""
        c = self.data["cascade"]
        lo = c["d_min"] if c["d_min"] is not None else d_min
        hi = c["d_max"] if c["d_max"] is not None else d_max
        try:
            return CascadeConfig(
                float(lo),
                float(hi),
                n_views=int(c["n_views"]),
                planes=tuple(c["planes"]),
                lam=float(c["lambda"]),
                beta=float(c["beta"]),
                smoothing_radii=tuple(c["smoothing_radii"]),
                min_interval_width=float(c["min_interval_width"]),
                features=self.features(),
            )
        except (TypeError, ValueError) as e:
            raise ConfigError(f"cascade: {e}") from None

    @property
    def eval(self) -> dict:
        return self.data["eval"]


def _positive(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class HybridAEConfig:
    """Training configuration. `epochs` defaults to a desk-scale run; the
    full study used 200000."""

    snapshots: Path
    basis: Path
    r: int = 18
    learning_rate: float = 5e-4
    adam_epsilon: float = 1e-12
    epochs: int = 2000
    batch_size: int = 18
    seed: int = 0

    def validate(self, n_snapshots: int | None = None) -> None:
        if self.r < 1:
            raise ConfigError(f"latent dimension r must be positive, got {self.r}")
        if self.learning_rate <= 0 or self.adam_epsilon <= 0:
            raise ConfigError("learning_rate and adam_epsilon must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")
        if n_snapshots is not None:
            if self.r > n_snapshots:
                raise ConfigError(f"r = {self.r} exceeds the {n_snapshots} snapshots")
            if n_snapshots % self.batch_size:
                raise ConfigError(
                    f"batch_size {self.batch_size} does not divide {n_snapshots} snapshots"
                )

    @classmethod
    def from_json(cls, path: str | Path) -> HybridAEConfig:
        raw = json.loads(Path(path).read_text())
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown keys: {', '.join(unknown)}")
        raw["snapshots"] = Path(raw["snapshots"])
        raw["basis"] = Path(raw["basis"])
        cfg = cls(**raw)
        cfg.validate()
        return cfg

    def to_json(self) -> str:
        d = asdict(self)
        d["snapshots"] = str(self.snapshots)
        d["basis"] = str(self.basis)
        return json.dumps(d, indent=2)

"""``key = value`` run configuration files."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields

from fpl.errors import ConfigError
from fpl.model import Hyperparams

MODES = ("sfpl", "pfpl", "custom", "bpr", "toppop", "random")


def _optional_float(text: str) -> float | None:
    return None if text.lower() in ("", "none", "auto") else float(text)


def _optional_int(text: str) -> int | None:
    return None if text.lower() in ("", "none", "all") else int(text)


def _int_list(text: str) -> tuple[int, ...]:
    values = tuple(int(x) for x in text.replace(" ", "").split(",") if x)
    if not values:
        raise ValueError("empty list")
    return values


def _format(value) -> str:
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class RunConfig:
    dataset: str = ""
    mode: str = "sfpl"
    latent_dim: int = 10
    learning_rate: float = 0.05
    reg_user: float | None = None
    reg_pos_item: float | None = None
    reg_neg_item: float | None = None
    disclosure_prob: float = 1.0
    triples_per_round: int = 1
    cohort_size: int | None = None
    epochs: int = 10
    seed: int = 0
    cutoffs: tuple = (10,)
    sampling_mode: str = "user-wise"
    out: str = ""
    explicit: frozenset = field(default=frozenset(), compare=False, repr=False)

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls) if f.name != "explicit"]

    @classmethod
    def from_pairs(cls, pairs: list[tuple[str, str, int | None]], source: str = "<config>") -> RunConfig:
        values, explicit = {}, set()
        for key, raw, lineno in pairs:
            where = f"{source}:{lineno}" if lineno else source
            if key not in _PARSERS:
                raise ConfigError(f"{where}: unknown key {key!r}")
            try:
                values[key] = _PARSERS[key](raw)
            except ValueError as exc:
                raise ConfigError(f"{where}: bad value {raw!r} for {key}: {exc}") from None
            explicit.add(key)
        cfg = cls(**values, explicit=frozenset(explicit))
        cfg.check()
        return cfg

    @classmethod
    def parse(cls, text: str, source: str = "<config>") -> RunConfig:
        pairs = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
            key, raw = (s.strip() for s in stripped.split("=", 1))
            pairs.append((key, raw, lineno))
        return cls.from_pairs(pairs, source)

    @classmethod
    def load(cls, path: str | os.PathLike) -> RunConfig:
        with open(path, encoding="utf-8") as fh:
            return cls.parse(fh.read(), str(path))

    def with_overrides(self, **overrides) -> RunConfig:
        values = {k: getattr(self, k) for k in self.keys()}
        explicit = set(self.explicit)
        for k, v in overrides.items():
            if v is None:
                continue
            if k not in values:
                raise ConfigError(f"unknown key {k!r}")
            values[k] = v
            explicit.add(k)
        cfg = RunConfig(**values, explicit=frozenset(explicit))
        cfg.check()
        return cfg

    def check(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")
        if any(c < 1 for c in self.cutoffs):
            raise ConfigError("cutoffs must be positive")
        if self.mode == "sfpl":
            if "cohort_size" in self.explicit and self.cohort_size not in (None, 1):
                raise ConfigError(f"mode sfpl forces cohort_size = 1, got {self.cohort_size}")
            if "triples_per_round" in self.explicit and self.triples_per_round != 1:
                raise ConfigError(f"mode sfpl forces triples_per_round = 1, got {self.triples_per_round}")
        if self.mode == "pfpl":
            if "triples_per_round" in self.explicit and self.triples_per_round != 1:
                raise ConfigError(f"mode pfpl forces triples_per_round = 1, got {self.triples_per_round}")
        self.hyperparams()

    def hyperparams(self) -> Hyperparams:
        cohort = self.cohort_size
        if self.mode == "sfpl":
            cohort = 1
        return Hyperparams(
            latent_dim=self.latent_dim,
            learning_rate=self.learning_rate,
            reg_user=self.reg_user,
            reg_pos_item=self.reg_pos_item,
            reg_neg_item=self.reg_neg_item,
            disclosure_prob=self.disclosure_prob,
            triples_per_round=self.triples_per_round,
            cohort_size=cohort,
        )

    def dump(self) -> str:
        return "".join(f"{k} = {_format(getattr(self, k))}\n" for k in self.keys())


_PARSERS = {
    "dataset": str,
    "mode": str,
    "latent_dim": int,
    "learning_rate": float,
    "reg_user": _optional_float,
    "reg_pos_item": _optional_float,
    "reg_neg_item": _optional_float,
    "disclosure_prob": float,
    "triples_per_round": int,
    "cohort_size": _optional_int,
    "epochs": int,
    "seed": int,
    "cutoffs": _int_list,
    "sampling_mode": str,
    "out": str,
}

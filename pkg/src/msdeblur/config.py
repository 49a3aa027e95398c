"""Run configuration: a preset plus ``key = value`` overrides.

Keys are ``preset``, ``train.<field>``, ``generator.<field>`` and
``discriminator.<field>``. Unknown keys are rejected. ``to_kv`` writes every
effective value, so its output fed back through ``from_kv`` reproduces the
same run.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields, replace

from . import io
from .model import DiscriminatorSpec, GeneratorSpec
from .trainer import TrainConfig

PRESETS = ("desk", "paper")


def preset(name: str) -> "RunConfig":
    if name == "desk":
        return RunConfig("desk", TrainConfig.desk(), GeneratorSpec.desk(), DiscriminatorSpec.desk())
    if name == "paper":
        return RunConfig("paper", TrainConfig.paper(), GeneratorSpec.paper(), DiscriminatorSpec.paper())
    raise ValueError(f"unknown preset {name!r}; choose from {PRESETS}")


@dataclass(frozen=True)
class RunConfig:
    preset: str
    train: TrainConfig
    generator: GeneratorSpec
    discriminator: DiscriminatorSpec

    def to_kv(self) -> dict:
        out: dict = {"preset": self.preset}
        out.update({f"train.{k}": v for k, v in asdict(self.train).items()})
        out.update({f"generator.{k}": v for k, v in asdict(self.generator).items()})
        out.update({f"discriminator.{k}": v for k, v in self.discriminator.to_dict().items()})
        return out

    def to_text(self) -> str:
        return io.format_kv(self.to_kv())

    @classmethod
    def from_kv(cls, kv: dict[str, str], default_preset: str = "desk") -> "RunConfig":
        base = preset(kv.get("preset", default_preset).strip())
        train = asdict(base.train)
        gen = asdict(base.generator)
        disc = base.discriminator.to_dict()
        for key, text in kv.items():
            if key == "preset":
                continue
            section, _, name = key.partition(".")
            target = {"train": train, "generator": gen, "discriminator": disc}.get(section)
            if target is None or name not in target:
                raise ValueError(f"unknown config key {key!r}")
            target[name] = io.parse_value(text, target[name])
        return cls(base.preset, TrainConfig(**train), GeneratorSpec(**gen), DiscriminatorSpec.from_dict(disc))

    @classmethod
    def load(cls, path, default_preset: str = "desk") -> "RunConfig":
        return cls.from_kv(io.read_kv(path), default_preset)

    def with_train(self, **changes) -> "RunConfig":
        return replace(self, train=replace(self.train, **changes))


def train_field_names() -> list[str]:
    return [f.name for f in fields(TrainConfig)]

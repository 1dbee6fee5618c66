"""Experiment configuration: flat ``key = value`` lines under section headers.

Precedence (lowest first): built-in defaults, config file, ``FEDNC_<SECTION>_<KEY>``
environment variables, command-line flags.  :meth:`ExperimentConfig.dumps`
writes every key in the fixed order of :data:`SCHEMA`, which is the
canonical form.
"""
import configparser
import os
from dataclasses import dataclass, field

from .errors import ConfigError
from .federation import FederationConfig
from .galois import SUPPORTED_WIDTHS, FieldSpec
from .model import Architecture, TrainConfig
from .netsim import ChannelConfig
from .seeding import DEFAULT_SEED


def _bool(v):
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


def _ints(v):
    return tuple(int(x) for x in str(v).replace(";", ",").split(",") if x.strip())


SCHEMA = [
    ("experiment", "seed", int, DEFAULT_SEED),
    ("experiment", "output_dir", str, "out"),
    ("experiment", "trials", int, 100_000),
    ("experiment", "scheme", str, "both"),
    ("experiment", "record_time", _bool, False),
    ("federation", "n_clients", int, 100),
    ("federation", "participants", int, 10),
    ("federation", "rounds", int, 100),
    ("federation", "partition", str, "mixed_non_iid"),
    ("federation", "shards_per_client", int, 2),
    ("federation", "iid_fraction", float, 0.05),
    ("federation", "weights", str, "size"),
    ("training", "local_epochs", int, 5),
    ("training", "batch_size", int, 10),
    ("training", "learning_rate", float, 0.05),
    ("training", "optimizer", str, "sgd"),
    ("training", "adam_beta1", float, 0.9),
    ("training", "adam_beta2", float, 0.999),
    ("training", "adam_eps", float, 1e-8),
    ("channel", "mode", str, "direct"),
    ("channel", "loss_prob", float, 0.0),
    ("channel", "redundancy", int, 0),
    ("channel", "max_draws", int, 10_000),
    ("field", "s", int, 8),
    ("model", "arch", str, "mlp"),
    ("model", "hidden", int, 32),
    ("data", "source", str, "synthetic"),
    ("data", "n_train", int, 5000),
    ("data", "n_test", int, 1000),
    ("data", "n_features", int, 32),
    ("data", "n_classes", int, 10),
    ("data", "class_sep", float, 1.0),
    ("data", "noise", float, 1.0),
    ("data", "idx_train_images", str, ""),
    ("data", "idx_train_labels", str, ""),
    ("data", "idx_test_images", str, ""),
    ("data", "idx_test_labels", str, ""),
    ("verify", "k", int, 10),
    ("verify", "fields", _ints, (1, 8)),
    ("verify", "coupon_ks", _ints, (2, 5, 10, 20)),
]

_TYPES = {(sec, key): (conv, default) for sec, key, conv, default in SCHEMA}

_CHOICES = {
    ("experiment", "scheme"): ("fedavg", "fednc", "both"),
    ("federation", "partition"): ("iid", "mixed_non_iid"),
    ("federation", "weights"): ("size", "uniform"),
    ("training", "optimizer"): ("sgd", "adam"),
    ("channel", "mode"): ("direct", "blind_box", "lossy"),
    ("model", "arch"): ("mlp", "logreg"),
    ("data", "source"): ("synthetic", "idx"),
}


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    return str(v)


@dataclass
class ExperimentConfig:
    values: dict = field(default_factory=lambda: {(s, k): d for s, k, _, d in SCHEMA})

    def __getitem__(self, name):
        sec, key = name.split(".")
        return self.values[(sec, key)]

    def set(self, name: str, raw):
        sec, key = name.split(".")
        if (sec, key) not in _TYPES:
            raise ConfigError(name, "unknown key")
        conv, _ = _TYPES[(sec, key)]
        if isinstance(raw, (tuple, list)):
            raw = ",".join(str(x) for x in raw)
        try:
            val = conv(raw.strip() if isinstance(raw, str) else raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(name, f"cannot parse {raw!r}: {exc}") from None
        self.values[(sec, key)] = val

    @classmethod
    def load(cls, path=None, env=None, overrides=None) -> "ExperimentConfig":
        cfg = cls()
        if path is not None:
            parser = configparser.ConfigParser(interpolation=None)
            parser.optionxform = str
            with open(path) as fh:
                text = fh.read()
            try:
                parser.read_string(text, source=str(path))
            except configparser.Error as exc:
                raise ConfigError(str(path), f"unparseable config: {exc}") from None
            for sec in parser.sections():
                for key, raw in parser.items(sec):
                    cfg.set(f"{sec}.{key}", raw)
        env = os.environ if env is None else env
        for sec, key, _, _ in SCHEMA:
            name = f"FEDNC_{sec.upper()}_{key.upper()}"
            if name in env:
                cfg.set(f"{sec}.{key}", env[name])
        for name, raw in (overrides or {}).items():
            if raw is not None:
                cfg.set(name, raw)
        cfg.validate()
        return cfg

    def dumps(self) -> str:
        lines, current = [], None
        for sec, key, _, _ in SCHEMA:
            if sec != current:
                if current is not None:
                    lines.append("")
                lines.append(f"[{sec}]")
                current = sec
            lines.append(f"{key} = {_fmt(self.values[(sec, key)])}")
        return "\n".join(lines) + "\n"

    def validate(self):
        for (sec, key), allowed in _CHOICES.items():
            if self.values[(sec, key)] not in allowed:
                raise ConfigError(f"{sec}.{key}", f"must be one of {allowed}")
        positive = ["experiment.trials", "federation.n_clients", "federation.participants",
                    "training.local_epochs", "training.batch_size", "channel.max_draws",
                    "data.n_train", "data.n_test", "data.n_features", "data.n_classes",
                    "model.hidden", "verify.k", "federation.shards_per_client"]
        for name in positive:
            if self[name] < 1:
                raise ConfigError(name, "must be >= 1")
        if self["federation.rounds"] < 0:
            raise ConfigError("federation.rounds", "must be >= 0")
        if self["federation.participants"] > self["federation.n_clients"]:
            raise ConfigError("federation.participants", "must not exceed n_clients")
        if not 0 <= self["federation.iid_fraction"] <= 1:
            raise ConfigError("federation.iid_fraction", "must lie in [0, 1]")
        if not self["training.learning_rate"] >= 0:
            raise ConfigError("training.learning_rate", "must be >= 0")
        if not 0 <= self["channel.loss_prob"] < 1:
            raise ConfigError("channel.loss_prob", "must lie in [0, 1)")
        if self["channel.redundancy"] < 0:
            raise ConfigError("channel.redundancy", "must be >= 0")
        if self["channel.max_draws"] < self["federation.participants"]:
            raise ConfigError("channel.max_draws", "must be >= participants")
        if self["field.s"] not in SUPPORTED_WIDTHS:
            raise ConfigError("field.s", f"must be one of {SUPPORTED_WIDTHS}")
        for s in self["verify.fields"]:
            if s not in SUPPORTED_WIDTHS:
                raise ConfigError("verify.fields", f"must be drawn from {SUPPORTED_WIDTHS}")
        if not self["verify.coupon_ks"] or min(self["verify.coupon_ks"]) < 1:
            raise ConfigError("verify.coupon_ks", "must be a non-empty list of K >= 1")
        if self["data.source"] == "idx":
            for key in ("idx_train_images", "idx_train_labels", "idx_test_images", "idx_test_labels"):
                if not self[f"data.{key}"]:
                    raise ConfigError(f"data.{key}", "required when data.source = idx")

    def federation(self, scheme="fedavg") -> FederationConfig:
        return FederationConfig(
            n_clients=self["federation.n_clients"],
            participants=self["federation.participants"],
            rounds=self["federation.rounds"],
            client_weights=None if self["federation.weights"] == "size"
            else tuple([1.0 / self["federation.n_clients"]] * self["federation.n_clients"]),
            partition=self["federation.partition"],
            shards_per_client=self["federation.shards_per_client"],
            iid_fraction=self["federation.iid_fraction"],
            field=FieldSpec(self["field.s"]),
            scheme=scheme,
        )

    def training(self) -> TrainConfig:
        return TrainConfig(
            local_epochs=self["training.local_epochs"],
            batch_size=self["training.batch_size"],
            learning_rate=self["training.learning_rate"],
            optimizer=self["training.optimizer"],
            adam_beta1=self["training.adam_beta1"],
            adam_beta2=self["training.adam_beta2"],
            adam_eps=self["training.adam_eps"],
        )

    def channel(self) -> ChannelConfig:
        return ChannelConfig(
            mode=self["channel.mode"],
            loss_prob=self["channel.loss_prob"],
            redundancy=self["channel.redundancy"],
            max_draws=self["channel.max_draws"],
        )

    def architecture(self, n_features=None, n_classes=None) -> Architecture:
        return Architecture(
            kind=self["model.arch"],
            n_features=n_features or self["data.n_features"],
            n_classes=n_classes or self["data.n_classes"],
            n_hidden=self["model.hidden"],
        )

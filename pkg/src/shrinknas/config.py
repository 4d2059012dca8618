"""INI-style run configuration with sections [search], [evaluator], [arch], [priors].

Every key is optional. Missing keys fall back to the defaults for the chosen
cell kind (n=8, k=10, lambda=0.1, MACs for CNN; n=6, k=5, params for RNN).
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field

from .cost import CnnShape, RnnShape
from .evaluators import TrainSettings
from .priors import Family, PriorError, PriorSpec
from .shrink import ConfigError, SearchConfig
from .topology import CellKind

KNOWN_KEYS = {
    "search": {"kind", "n", "k", "lambda", "resource_kind", "res_scope", "seed"},
    "evaluator": {"type", "epochs", "lr", "batch_size", "clip_norm", "dataset", "dataset_seed",
                  "vocab", "w_nodes", "w_paths", "w_diversity"},
    "arch": {"stages", "t", "base_filters", "resolution", "num_classes", "hidden_dim", "embed_dim", "vocab"},
    "priors": {"families", "nodes", "trials", "ws_k", "ws_p", "er_p", "ba_m"},
}


@dataclass
class ArchOptions:
    stages: int = 3
    t: int = 1
    base_filters: int = 16
    resolution: tuple = (32, 32)
    num_classes: int = 10
    hidden_dim: int = 200
    embed_dim: int = 200
    vocab: int = 10000


@dataclass
class PriorOptions:
    families: tuple = ("ws", "er", "ba")
    nodes: int = 15
    trials: int = 10
    params: dict = field(default_factory=dict)

    def specs(self, seed: int) -> list[PriorSpec]:
        return [PriorSpec(f, self.nodes, self.params.get(Family(f), {}), seed) for f in self.families]


@dataclass
class RunConfig:
    search: SearchConfig
    arch: ArchOptions
    priors: PriorOptions


def _get(section, key, conv, what):
    raw = section.get(key)
    try:
        return conv(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"[{section.name}] {key}: expected {what}, got {raw!r}") from None


def _resolution(text: str) -> tuple:
    parts = text.lower().replace("x", " ").split()
    if len(parts) == 1:
        parts = parts * 2
    h, w = (int(p) for p in parts)
    return h, w


def parse_config(text: str, seed_override: int | None = None) -> RunConfig:
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config syntax: {exc}") from None
    for name in cp.sections():
        if name not in KNOWN_KEYS:
            raise ConfigError(f"unknown section [{name}]")
        unknown = set(cp[name]) - KNOWN_KEYS[name]
        if unknown:
            raise ConfigError(f"[{name}] unknown keys: {', '.join(sorted(unknown))}")
    for name in KNOWN_KEYS:
        if not cp.has_section(name):
            cp.add_section(name)
    s, e, a, p = cp["search"], cp["evaluator"], cp["arch"], cp["priors"]

    try:
        kind = CellKind(s.get("kind", "cnn").strip().lower())
    except ValueError:
        raise ConfigError(f"[search] kind: expected cnn or rnn, got {s.get('kind')!r}") from None

    over = {}
    for key, conv, what in (("n", int, "integer"), ("k", int, "integer"), ("lambda", float, "number"),
                            ("seed", int, "integer")):
        if key in s:
            over["lam" if key == "lambda" else key] = _get(s, key, conv, what)
    for key in ("resource_kind", "res_scope"):
        if key in s:
            over[key] = s[key].strip().lower()
    if seed_override is not None:
        over["seed"] = seed_override
    if "type" in e:
        over["evaluator"] = e["type"].strip().lower()
    if "epochs" in e:
        over["epochs_per_candidate"] = _get(e, "epochs", int, "integer")
    weights = [0.03, 0.10, 0.10]
    for i, key in enumerate(("w_nodes", "w_paths", "w_diversity")):
        if key in e:
            weights[i] = _get(e, key, float, "number")
    over["surrogate_weights"] = tuple(weights)
    train = TrainSettings()
    if "lr" in e:
        train.lr = _get(e, "lr", float, "number")
    if "batch_size" in e:
        train.batch_size = _get(e, "batch_size", int, "integer")
    if "clip_norm" in e:
        train.clip_norm = _get(e, "clip_norm", float, "number")
    over["train"] = train
    if "dataset" in e:
        gen = e["dataset"].strip().lower()
        ds = {"generator": gen, "seed": _get(e, "dataset_seed", int, "integer") if "dataset_seed" in e else 0}
        if gen == "tokens":
            ds["vocab"] = _get(e, "vocab", int, "integer") if "vocab" in e else 8
            ds["mode"] = "markov"
        over["dataset"] = ds

    arch = ArchOptions()
    for key in ("stages", "t", "base_filters", "num_classes", "hidden_dim", "embed_dim", "vocab"):
        if key in a:
            setattr(arch, key, _get(a, key, int, "integer"))
    if "resolution" in a:
        arch.resolution = _get(a, "resolution", _resolution, "HxW")
    if kind is CellKind.RNN:
        over["cost_shape"] = RnnShape(arch.hidden_dim, arch.vocab, arch.embed_dim)
    elif "resolution" in a or "base_filters" in a:
        h, w = arch.resolution
        over["cost_shape"] = CnnShape(h, w, arch.base_filters, arch.base_filters)

    pri = PriorOptions()
    if "families" in p:
        fams = tuple(f.strip().lower() for f in p["families"].split(",") if f.strip())
        for f in fams:
            if f not in {x.value for x in Family}:
                raise ConfigError(f"[priors] families: unknown family {f!r}")
        pri.families = fams
    if "nodes" in p:
        pri.nodes = _get(p, "nodes", int, "integer")
    if "trials" in p:
        pri.trials = _get(p, "trials", int, "integer")
    fam_params = {}
    for key, fam, name, conv in (("ws_k", Family.WS, "k", int), ("ws_p", Family.WS, "p", float),
                                 ("er_p", Family.ER, "p", float), ("ba_m", Family.BA, "m", int)):
        if key in p:
            fam_params.setdefault(fam, {})[name] = _get(p, key, conv, "number")
    pri.params = fam_params

    search = SearchConfig.for_kind(kind, **over)
    try:
        pri.specs(search.seed)
    except PriorError as exc:
        raise ConfigError(f"[priors] {exc}") from None
    return RunConfig(search, arch, pri)


def load_config(path, seed_override: int | None = None) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, seed_override)


def search_config_dict(cfg: SearchConfig) -> dict:
    shape = cfg.cost_shape
    return {
        "kind": cfg.kind.value,
        "n": cfg.n,
        "k": cfg.k,
        "lambda": cfg.lam,
        "resource_kind": cfg.resource_kind.value,
        "res_scope": cfg.res_scope.value,
        "evaluator": cfg.evaluator.value,
        "seed": cfg.seed,
        "epochs_per_candidate": cfg.epochs_per_candidate,
        "surrogate_weights": list(cfg.surrogate_weights),
        "cost_shape": None if shape is None else dict(vars(shape)),
        "dataset": cfg.dataset,
        "train": dict(vars(cfg.train)),
    }

"""Experiment configuration (JSON-serializable)."""

import json
from dataclasses import asdict, dataclass, fields

TASKS = ("classify", "regress-learnable", "regress-hetero", "regress-gauss")

TASK_VARIANT = {
    "classify": "bernoulli",
    "regress-learnable": "learnable_gauss",
    "regress-hetero": "hetero_gauss",
    "regress-gauss": "gauss",
}

# Inverse link each task discretizes by default.
TASK_LINK = {
    "classify": "sigmoid",
    "regress-learnable": "identity",
    "regress-hetero": "exp",
    "regress-gauss": None,
}


@dataclass
class ExperimentConfig:
    task: str = "classify"
    K: int = 20
    lo: float = -3.0
    hi: float = 3.0
    M: int = 10
    link_mode: str = None
    regularizer: str = "none"
    lam: float = 1.0
    c: float = 0.0
    reference: str = None
    prior_var: float = 1.0
    level_var_init: float = 0.1
    log_noise_init: float = 0.0
    alpha: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    iters: int = 1000
    tol: float = 1e-6
    patience: int = 25
    train_inducing: bool = True
    base_jitter: float = 1e-4
    folds: int = 10
    seed: int = 0
    data: str = None
    target: str = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if int(self.K) < 1:
            raise ValueError("K must be at least 1")
        if int(self.M) < 1:
            raise ValueError("M must be at least 1")
        if not self.lo < self.hi:
            raise ValueError("lo must be below hi")
        if self.iters < 0:
            raise ValueError("iters must be nonnegative")
        if self.link_mode is None:
            if self.task == "regress-learnable":
                self.link_mode = "trainable-gaussian" if self.regularizer == "bayes_prior" else "trainable-point"
            else:
                self.link_mode = "fixed"

    @property
    def variant(self):
        return TASK_VARIANT[self.task]

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def replace(self, **changes):
        d = self.to_dict()
        d.update(changes)
        if "link_mode" not in changes and ("task" in changes or "regularizer" in changes):
            d["link_mode"] = None
        return ExperimentConfig.from_dict(d)

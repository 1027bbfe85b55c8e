"""Benchmark problem families and their on-disk bundle format."""

from ..errors import ConfigError
from . import compsense, pde, serialize, tomo
from .compsense import CsProblem, gen_cs
from .pde import PdeProblem, gen_pde
from .serialize import load_problem, save_problem
from .tomo import TomoProblem, gen_tomo

_GENERATORS = {"tomo": gen_tomo, "cs": gen_cs, "pde": gen_pde}
_READERS = {"tomo": tomo.from_saved, "cs": compsense.from_saved,
            "pde": pde.from_saved}

FAMILIES = tuple(sorted(_GENERATORS))


def generate(family, **kwargs):
    try:
        gen = _GENERATORS[family]
    except KeyError:
        raise ConfigError("unknown family %r (have %s)"
                          % (family, ", ".join(FAMILIES))) from None
    return gen(**kwargs)


def load(bundle_dir):
    """Rebuild a problem bundle saved by any family's ``save`` method."""
    family, meta, matrices, vectors = load_problem(bundle_dir)
    try:
        reader = _READERS[family]
    except KeyError:
        raise ConfigError("unknown family %r in bundle" % (family,)) from None
    return reader(meta, matrices, vectors)


__all__ = [
    "CsProblem", "PdeProblem", "TomoProblem", "FAMILIES",
    "gen_cs", "gen_pde", "gen_tomo", "generate", "load",
    "load_problem", "save_problem",
]

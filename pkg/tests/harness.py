"""Engine-versus-oracle comparison shared by the engine and acceptance tests."""

from relse.concrete import ct_oracle
from relse.engine import AnalysisConfig, Mode, explore

RELATIONAL = (Mode.BINSEC_REL, Mode.RELSE, Mode.SC)
K = 32
BITS = 4


def oracle_config(mode, **kw) -> AnalysisConfig:
    # the oracle fixes unset memory to 0 and enumerates 4-bit inputs
    return AnalysisConfig(mode, depth=K, memory_default=0, input_bits=BITS, **kw)


def compare(p, solver, modes=RELATIONAL, **kw):
    """Per-mode verdicts plus the oracle's; ``problems`` lists every
    disagreement or unvalidated violation."""
    o = ct_oracle(p, K, bits=BITS)
    expected = "secure" if o.ct else "insecure"
    verdicts, problems = {}, []
    for mode in modes:
        v = explore(p, oracle_config(mode, **kw), solver)
        verdicts[mode] = v
        if v.name != expected:
            problems.append(f"{mode.value}: engine {v.name}, oracle {o.status}")
        if not all(x.validated for x in v.violations):
            problems.append(f"{mode.value}: unvalidated violation")
    return o, verdicts, problems

"""Classical non-uniform electron gas energies from the grand-canonical
strictly-correlated-electrons functional, with machine checks of the
associated inequalities, constants and geometric constructions.

Submodules are imported lazily so that lightweight entry points (the
constants table, file validation) do not pay the scipy import cost.
"""

from importlib import import_module

__version__ = "0.1.0"

_EXPORTS = {
    "constants_table": "constants",
    "BudgetExceeded": "errors",
    "GridTooCoarse": "errors",
    "InfeasibleProblem": "errors",
    "NuegError": "errors",
    "SolverFailure": "errors",
    "ValidationError": "errors",
    "DiscreteDensity": "gcmeasure",
    "GCPlan": "gcmeasure",
    "RieszCost": "gcmeasure",
    "density_of": "gcmeasure",
    "direct_energy": "gcmeasure",
    "localize": "gcmeasure",
    "riesz_energy": "gcmeasure",
    "Domain": "geometry",
    "Isometry": "geometry",
    "Mollifier": "geometry",
    "SmearedIndicator": "geometry",
    "fisher_regularity": "geometry",
    "skeleton": "geometry",
    "smear": "geometry",
    "smeared_kinetic": "geometry",
    "so_quadrature": "geometry",
    "tiling24": "geometry",
    "Lattice": "periodic",
    "MeanValueResult": "periodic",
    "PeriodicField": "periodic",
    "mean_value": "periodic",
    "power_mean": "periodic",
    "windowed_mean": "periodic",
    "EnergyReport": "sce",
    "Entropic": "sce",
    "ExactLP": "sce",
    "SCEProblem": "sce",
    "indirect_energy": "sce",
    "sce_entropic": "sce",
    "sce_exact": "sce",
    "solve": "sce",
    "NUEGJob": "thermo",
    "ThermoSequence": "thermo",
    "cutoff_density": "thermo",
    "dyadic_sequence": "thermo",
    "energy_per_volume": "thermo",
    "extrapolate_limit": "thermo",
    "graf_schenker_check": "thermo",
    "nueg_scaling_identity": "thermo",
    "tetra_rate_check": "thermo",
}

__all__ = sorted(_EXPORTS) + ["__version__"]


def __getattr__(name):
    module = _EXPORTS.get(name)
    if module is None:
        raise AttributeError(f"module 'nueg' has no attribute {name!r}")
    return getattr(import_module(f".{module}", __name__), name)


def __dir__():
    return __all__

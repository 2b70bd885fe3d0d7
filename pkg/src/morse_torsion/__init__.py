"""Torsion invariants of Morse-Smale flows.

Modules:

* :mod:`.algebra_core` -- exterior algebra, Gram norms, Pfaffians, Berezin integrals;
* :mod:`.complex_engine` -- cochain complexes, determinant lines, torsion and fusion
  along filtrations;
* :mod:`.flow_model` -- critical elements, Milnor metrics and Franks surgery;
* :mod:`.zeta` -- twisted Ruelle zeta functions;
* :mod:`.rs_circle` -- zeta-regularized determinants and the Ray-Singer metric on the circle;
* :mod:`.cli` -- system files, commands and reports.
"""
from .algebra_core import DEFAULT_TOL, AntisymMatrix, GramMetric, Multivector, pfaffian
from .complex_engine import CochainComplex, FilteredComplex, GradedMetric, MetricedDetLine, cohomology
from .errors import (
    FiltrationError,
    HypothesisError,
    IllConditionedError,
    ModelMismatchError,
    NotAcyclicError,
    StaleReportError,
    TorsionError,
)
from .flow_model import ClosedOrbitDatum, FixedPointDatum, MorseSmaleSystem, SurgeryDatum, milnor_metric
from .rs_circle import CircleRSSpec, HurwitzParams, bz_check_circle
from .zeta import ZetaSpec, ruelle_eval

__version__ = "0.1.0"

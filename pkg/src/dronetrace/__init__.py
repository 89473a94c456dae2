"""dronetrace: a forensic toolkit for UAV examinations.

Library layout mirrors the workflow: :mod:`dronetrace.casefile` models
cases, exhibits, custody and the 20-step state machine;
:mod:`dronetrace.imaging` acquires and clones storage media;
:mod:`dronetrace.flightlog` defines the DATv1 flight-log format with strict
and recovery parsers; :mod:`dronetrace.carving` extracts media by
signature; :mod:`dronetrace.export` renders CSV/KML;
:mod:`dronetrace.report` produces the provenance-tracked final report; and
:mod:`dronetrace.fixtures` generates deterministic test data.
"""

__version__ = "0.1.0"

from .errors import DroneTraceError

__all__ = ["DroneTraceError", "__version__"]

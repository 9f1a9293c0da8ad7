"""Token quorum state-machine replication with switchable read strategies.

Modules:

* :mod:`tokenquorum.tokens` - tokens, configurations, quorum predicates and
  the leader / majority / flexible / local presets.
* :mod:`tokenquorum.replica` - the replica state machine (writes, reads,
  reconfiguration).
* :mod:`tokenquorum.reconfig` - configuration specs and reconfiguration audits.
* :mod:`tokenquorum.sim` - seeded discrete-event simulator.
* :mod:`tokenquorum.lincheck` - linearizability and read-index checks.
* :mod:`tokenquorum.metrics`, :mod:`tokenquorum.scenario`,
  :mod:`tokenquorum.cli` - run artifacts, scenario files, command line.
"""

from .lincheck import HistoryEvent, check_linearizable, check_read_index_oracle
from .metrics import summarize
from .reconfig import audit_trace, build_config
from .replica import Replica
from .sim import ClientOp, FaultProfile, Scenario, Workload, run
from .tokens import (LatencyMatrix, Token, TokenConfiguration, closest_read_quorum,
                     is_read_quorum, is_write_quorum, majority, minimal_read_quorums,
                     minimal_write_quorums, mimic_flexible, mimic_leader, mimic_local,
                     mimic_majority, process_name, verify_intersection)

__version__ = "0.1.0"

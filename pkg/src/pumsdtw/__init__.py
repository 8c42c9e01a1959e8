"""Bit-exact simulation of subsequence DTW on MRAM crossbars, with a cost model."""
from .core import (AccumulatorOverflowError, SdtwResult, StreamWorkspace, dist, run_query_filtering,
                   run_self_join, sdtw_full, sdtw_matrix, sdtw_stream)
from .costmodel import (DeviceConfig, TechParams, endurance_estimate, sensitivity_report, total_energy,
                        total_time)
from .crossbar import ColumnLayout, CrossbarArray
from .ledger import CostLedger
from .mapper import MappingPlan, plan
from .series import QuerySet, TimeSeries, ingest, random_walk, slice_queries
from .wavefront import CrossbarOverflowError, estimate_ledger, run_batch
from .workloads import WorkloadSpec, evaluate, generate, pum_sdtw, table3_grid

__version__ = "0.1.0"

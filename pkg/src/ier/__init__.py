"""Iterative experience refinement for software-building LLM agents.

Execution chains are mined for shortcut experiences, stored in retrievable
key/value pools, propagated between task batches and pruned by information
gain and usage frequency.
"""

from .acquisition import Shortcut, extract_shortcuts, generate_pseudo_instruction, split_shortcut
from .chain import ExecutionChain, Instruction, Solution, append_step, new_chain, nonadjacent_pairs, reachable
from .config import RunConfig, load_config
from .elimination import combine, frequency_filter, gain_filter, solution_score
from .metrics import completeness, consistency, executability, phase_efficiency, quality, utilization_matrix
from .pool import I2S, S2I, ExperiencePool, ExperienceRecord, load_pool, merge, save_pool
from .propagation import Runner, Task, TaskBatch, partition_tasks, run_task

__version__ = "0.1.0"

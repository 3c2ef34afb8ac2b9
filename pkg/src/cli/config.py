"""Run configuration: built-in defaults <- JSON file (--config) <- command-line flags."""

import os
import logging
from dataclasses import dataclass, asdict, field, fields
from typing import Dict, List, Optional

from src.diffusion.schedules import NoiseSchedule
from src.ot.experiment import OTConfig
from src.training.trainer import TrainConfig
from src.utils.csv_io import read_json
from src.utils.errors import ConfigError

logger = logging.getLogger(__name__)

COMMANDS = ('gen-data', 'fisher-check', 'trace-bench', 'nll', 'adjoint-sim', 'ot-test', 'train')

# Per-command defaults for keys left unset.
DEFAULT_STEPS = {'nll': 1000, 'adjoint-sim': 50}
DEFAULT_OUT = {
    'gen-data': 'data.csv',
    'fisher-check': 'fisher_check.csv',
    'trace-bench': 'trace_bench.csv',
    'nll': 'nll.csv',
    'adjoint-sim': 'adjoint_sim.csv',
    'ot-test': 'ot_test.csv',
    'train': 'net.ckpt',
}


@dataclass
class RunConfig:
    """
    Fully resolved parameters of one CLI run.

    Attributes:
        command: Sub-command name
        seed: Root seed of every random draw
        out: Main output path
        schedule: Schedule block (see NoiseSchedule.from_config)
        data: Built-in dataset name, dataset CSV, or Gaussian JSON
        n: Sample count for chessboard / gaussian generation
        steps: Euler steps (None = command default)
        trace_method: exact, df_tm, vjp or hutchinson
        op: Adjoint operator (exact, vjp, df_ea) or 'all'
        transpose_variant: Transposed fundamental-matrix update
        m: Euler steps of the OT test
        n_traj: Chains / trajectories
        s: OT stop time (None = data-dependent default)
        t_grid: Evaluation times
        n_eval_points: Evaluation points per time
        n_probes: Hutchinson probes
        terminal: NLL terminal prior ('gaussian' or 'exact')
        x_csv: Points for the nll command (None = sampled from the data)
        n_points: Points sampled when x_csv is None
        x_ref: Adjoint loss target (None = ones)
        eta: Guidance strength
        guidance_steps: Guided step indices (None = middle band)
        net: Head to train ('eps' or 'tm')
        eps_net: Epsilon checkpoint for net-backed providers
        tm_net: Trace checkpoint for net-backed providers
        train: TrainConfig block
        threads: Worker cap (None = DF_LAB_THREADS)
        verbose: Debug logging
    """

    command: str
    seed: int = 0
    out: Optional[str] = None
    schedule: Dict = field(default_factory=lambda: {'kind': 'vp'})
    data: str = 'nonaffine3'
    n: int = 5000
    steps: Optional[int] = None
    trace_method: str = 'exact'
    op: str = 'all'
    transpose_variant: bool = False
    m: int = 1000
    n_traj: int = 16
    s: Optional[float] = None
    t_grid: List[float] = field(default_factory=lambda: [0.2, 0.4, 0.6, 0.8, 1.0])
    n_eval_points: int = 40
    n_probes: int = 351
    terminal: str = 'gaussian'
    x_csv: Optional[str] = None
    n_points: int = 16
    x_ref: Optional[List[float]] = None
    eta: float = 0.2
    guidance_steps: Optional[List[int]] = None
    net: str = 'eps'
    eps_net: Optional[str] = None
    tm_net: Optional[str] = None
    train: Dict = field(default_factory=dict)
    threads: Optional[int] = None
    verbose: bool = False

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ConfigError(f"Unknown command {self.command!r}; choose from {COMMANDS}")
        if self.out is None:
            self.out = DEFAULT_OUT[self.command]
        if self.steps is None:
            self.steps = DEFAULT_STEPS.get(self.command, 1000)
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        if self.net not in ('eps', 'tm'):
            raise ConfigError(f"net must be 'eps' or 'tm', got {self.net!r}")
        if not isinstance(self.schedule, dict) or not isinstance(self.train, dict):
            raise ConfigError("'schedule' and 'train' must be JSON objects")
        self.trace_method = self.trace_method.lower().replace('-', '_')
        self.op = self.op.lower().replace('-', '_')
        # validate nested blocks early
        self.schedule_obj()
        self.train_config()

    # ==================== NESTED BLOCKS ====================

    def schedule_obj(self) -> NoiseSchedule:
        return NoiseSchedule.from_config(self.schedule)

    def train_config(self) -> TrainConfig:
        block = dict(self.train)
        block.setdefault('seed', self.seed)
        return TrainConfig.from_config(block)

    def ot_config(self) -> OTConfig:
        return OTConfig(M=self.m, n_traj=self.n_traj, s=self.s, seed=self.seed,
                        transpose_variant=self.transpose_variant)

    # ==================== RESOLUTION ====================

    @classmethod
    def resolve(cls, command: str, file_path: Optional[str] = None, overrides: Optional[Dict] = None) -> 'RunConfig':
        """
        Merge defaults, an optional JSON file and flag overrides.

        Args:
            command: Sub-command
            file_path: JSON config file (may hold any RunConfig key)
            overrides: Flag values; None entries are ignored

        Returns:
            RunConfig
        """
        merged: Dict = {}
        if file_path:
            merged.update(read_json(file_path))
        for key, value in (overrides or {}).items():
            if value is None:
                continue
            if key == 'schedule_kind':
                merged['schedule'] = {**merged.get('schedule', {'kind': 'vp'}), 'kind': value}
            else:
                merged[key] = value
        allowed = {f.name for f in fields(cls)} - {'command'}
        unknown = set(merged) - allowed
        if unknown:
            raise ConfigError(f"Unknown config keys: {sorted(unknown)}")
        try:
            return cls(command=command, **merged)
        except TypeError as e:
            raise ConfigError(f"Invalid config: {e}") from e

    def echo(self) -> Dict:
        """Resolved config with the nested blocks expanded."""
        payload = asdict(self)
        payload['schedule'] = self.schedule_obj().to_config()
        payload['train'] = self.train_config().to_config()
        return payload

    def sidecar_path(self) -> str:
        """JSON sidecar next to the main output."""
        stem, ext = os.path.splitext(self.out)
        return f"{stem}.config.json" if ext == '.json' else f"{stem}.json"

    def timing_path(self) -> str:
        stem, _ = os.path.splitext(self.out)
        return f"{stem}.timing.csv"

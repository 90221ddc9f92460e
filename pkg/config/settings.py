"""
Configuration management for the LDBA reward-shaping toolkit.
"""
import os
from dotenv import load_dotenv
from pathlib import Path

# Load environment variables
load_dotenv()


def _env_flag(name: str, default: str) -> bool:
    return os.getenv(name, default).strip().lower() in ('1', 'true', 'yes', 'on')


class Settings:
    """Runtime settings shared by the CLI, the trainer and the harness."""

    def __init__(self):
        self.data_dir = Path(os.getenv('LDBA_DATA_DIR', 'data'))
        self.output_dir = Path(os.getenv('LDBA_OUTPUT_DIR', 'runs'))

        # Progress output
        self.log_every = int(os.getenv('LDBA_LOG_EVERY', 50))
        self.verbose = _env_flag('LDBA_VERBOSE', 'true')

        # Evaluation and plot data
        self.smoothing_window = int(os.getenv('LDBA_SMOOTHING_WINDOW', 20))
        self.eval_starts = int(os.getenv('LDBA_EVAL_STARTS', 30))

        # Oracle limits
        self.oracle_state_limit = int(os.getenv('LDBA_ORACLE_STATE_LIMIT', 100000))
        self.oracle_max_iterations = int(os.getenv('LDBA_ORACLE_MAX_ITERATIONS', 20000))
        self.brute_force_state_limit = int(os.getenv('LDBA_BRUTE_FORCE_LIMIT', 12))

        # Validate numeric settings
        for env_name, value in (
            ('LDBA_LOG_EVERY', self.log_every),
            ('LDBA_SMOOTHING_WINDOW', self.smoothing_window),
            ('LDBA_EVAL_STARTS', self.eval_starts),
            ('LDBA_ORACLE_STATE_LIMIT', self.oracle_state_limit),
            ('LDBA_ORACLE_MAX_ITERATIONS', self.oracle_max_iterations),
            ('LDBA_BRUTE_FORCE_LIMIT', self.brute_force_state_limit),
        ):
            if value <= 0:
                raise ValueError(f"{env_name} must be positive, got {value}")

    def fixture_path(self, name: str) -> Path:
        """Path of a shipped HOA fixture."""
        return self.data_dir / 'fixtures' / name

    def run_dir(self, name: str) -> Path:
        """Output directory for a named run (not created here)."""
        return self.output_dir / name


# Global settings instance
settings = Settings()

"""
Text templates and column layouts for every artifact the toolkit writes.
"""
from typing import List


class FormatTemplates:
    """Collection of file-format templates."""

    SCHEMA_VERSION = 1

    HOA_HEADER = """HOA: v1
name: {name}
States: {num_states}
Start: {initial}
AP: {ap_count}{ap_names}
acc-name: {acc_name}
Acceptance: {num_sets} {acceptance}
properties: trans-labels explicit-labels trans-acc
"""

    TRAJECTORY_FIELDS: List[str] = ['step', 'x', 'y', 'theta', 'q', 'reward', 'V_bits', 'event']

    METRICS_FIELDS: List[str] = [
        'step', 'episode', 'return', 'normalized_return', 'accepted', 'epsilon_used'
    ]

    PLOT_FIELDS: List[str] = ['step', 'smoothed_normalized_return']

    PLOT_PREAMBLE = "# smoothing_window={window}\n"

    CHECKPOINT_FORMAT = 'ldba-ddpg-checkpoint'
    ANNOTATION_FORMAT = 'annotated-ldba'
    REPORT_FORMAT = 'experiment-report'

    @classmethod
    def format_hoa_header(
        cls,
        name: str,
        num_states: int,
        initial: int,
        ap_list: List[str],
        num_sets: int
    ) -> str:
        """Format the HOA header block for an automaton with `num_sets` Inf sets."""
        ap_names = ''.join(f' "{ap}"' for ap in ap_list)
        if num_sets == 1:
            acc_name = 'Buchi'
        else:
            acc_name = f'generalized-Buchi {num_sets}'
        acceptance = '&'.join(f'Inf({i})' for i in range(num_sets))
        return cls.HOA_HEADER.format(
            name=cls.quote(name),
            num_states=num_states,
            initial=initial,
            ap_count=len(ap_list),
            ap_names=ap_names,
            acc_name=acc_name,
            num_sets=num_sets,
            acceptance=acceptance
        )

    @staticmethod
    def quote(text: str) -> str:
        """HOA string literal: backslash and double quote escaped."""
        return '"' + text.replace('\\', '\\\\').replace('"', '\\"') + '"'

    @classmethod
    def format_plot_preamble(cls, window: int) -> str:
        """Format the comment line recording the smoothing window."""
        return cls.PLOT_PREAMBLE.format(window=window)

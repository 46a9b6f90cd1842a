"""Syntax-guided cross-attention binding on a toy attention model."""
from .binding import (
    BindingSet,
    DependencyGraph,
    PairSet,
    Token,
    UnmatchedSet,
    collect_modifiers,
    extract_all,
    extract_entity_nouns,
    pair_set,
    parse_conllu,
    unmatched_set,
)
from .harness import ScheduleConfig, init_latent, render_maps, run, separation_metrics, update_step
from .loss import (
    AttentionTensor,
    LossReport,
    PieceAlignment,
    grad_scores,
    loss_neg,
    loss_pos,
    loss_total,
    normalize_rows,
    sym_kl,
    word_distance,
)

__version__ = "0.1.0"

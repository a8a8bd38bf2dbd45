"""Task-oriented dialogue RL with dead-end detection and rescue."""

from .core import (ActionCatalogue, DialogueAct, Experience, RunConfig,
                   UserGoal, canonicalize_act, parse_act)
from .kb import (KbTable, TOY_TABLE, ValueDistribution, best_request_slot,
                 entropy, information_gain, match_count, match_entries,
                 value_distribution)
from .user_sim import NoiseModel, UserAgenda, respond, sample_goal, validate_goal
from .env import (DialogueEnv, EnvSnapshot, EnvState, Outcome, compute_reward,
                  feature_length, featurize, judge_success)
from .policy import (AdamState, QNetwork, ReplayBuffer, load_checkpoint,
                     save_checkpoint, select_action, sync_target, train_step,
                     warm_start_act)
from .rescue import (DeadEndEvent, EpisodeLog, RescueResult,
                     augment_experiences, detect_dead_end, episode_with_ddr,
                     ig_rescue_action, se_rescue_action)
from .harness import (DatasetSpec, RunResult, agent_config, dead_end_stats,
                      evaluate_policy, generate_dataset, n_trace,
                      paired_one_sided_p, run_grid, train_run)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"

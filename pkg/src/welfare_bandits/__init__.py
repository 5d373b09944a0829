"""Bandit algorithms that learn welfare-maximizing tax rates from binary demand feedback."""
from .dyadic import DyadicConfig, DyadicSearch, run_dyadic
from .envs import (ConcaveEnv, DiscreteEnv, FixedSequenceEnv, FourPointMuEnv, UniformEnv,
                   draw_valuation, load_sequence)
from .exp3 import Exp3Config, Exp3State, optimized_tuning, regret_bound, run_episode
from .harness import ExperimentPlan, fit_rate, run_plan
from .income import IncomeConfig, income_regret_bound, run_income_episode
from .oracles import best_constant_adversarial, best_constant_stochastic, cumulative_regret
from .welfare import demand, expected_welfare_uniform, social_welfare

__version__ = "0.1.0"

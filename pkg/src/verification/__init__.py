# Verification Module

from .evaluator import EvalInput, evaluate, random_input
from .oracle import brute_force_best_perm, check_function_preservation, compare_permutations
from .synthetic import SyntheticSpec, gen_synthetic

__all__ = [
    'EvalInput',
    'evaluate',
    'random_input',
    'brute_force_best_perm',
    'check_function_preservation',
    'compare_permutations',
    'SyntheticSpec',
    'gen_synthetic',
]

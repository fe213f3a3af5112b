import numpy as np
from scipy.stats import chi2


def chi_square_stat(observed: np.ndarray, expected: np.ndarray):
    """Chi-square statistic and dof after merging bins with expectation < 5."""
    observed = np.asarray(observed, dtype=np.float64)
    expected = np.asarray(expected, dtype=np.float64)
    keep = expected >= 5.0
    obs = np.append(observed[keep], observed[~keep].sum())
    exp = np.append(expected[keep], expected[~keep].sum())
    if exp[-1] == 0.0:
        obs, exp = obs[:-1], exp[:-1]
    stat = float(np.sum((obs - exp) ** 2 / exp))
    return stat, len(exp) - 1


def chi_square_ok(observed: np.ndarray, probs: np.ndarray, n_samples: int,
                  confidence: float = 0.99) -> bool:
    """True when observed counts sit inside the confidence band of probs."""
    stat, dof = chi_square_stat(observed, np.asarray(probs) * n_samples)
    return stat <= chi2.ppf(confidence, dof)

"""A priori LLRs -> bit probabilities, symbol log-priors, means and variances."""

from dataclasses import dataclass

import numpy as np

# |LLR| above this is treated as a certain bit.
LLR_CERTAIN = 30.0


def bit_prob_from_llr(L, c=1):
    """``Pr(c)`` for a +-1 bit value ``c`` given its a priori LLR ``L``."""
    L = np.asarray(L, dtype=float)
    cL = c * L
    p = 0.5 * (1.0 + np.tanh(cL / 2.0))
    p = np.where(cL > LLR_CERTAIN, 1.0, np.where(cL < -LLR_CERTAIN, 0.0, p))
    return p[()] if p.ndim == 0 else p


def bit_log_prob(L, c=1):
    """``ln Pr(c)``; ``-inf`` for bits ruled out by a saturated LLR."""
    L = np.asarray(L, dtype=float)
    cL = c * L
    with np.errstate(over="ignore"):
        lp = -np.logaddexp(0.0, -cL)
    lp = np.where(cL > LLR_CERTAIN, 0.0, np.where(cL < -LLR_CERTAIN, -np.inf, lp))
    return lp[()] if lp.ndim == 0 else lp


def symbol_log_priors(llrs, c):
    """Log prior of every constellation point.

    Parameters
    ----------
    llrs : ndarray, shape (..., Q)
        A priori LLRs of the bits labelling one symbol.
    c : Constellation

    Returns
    -------
    ndarray, shape (..., 2**Q)
    """
    llrs = np.asarray(llrs, dtype=float)
    lp = bit_log_prob(llrs[..., None, :], c.signs)  # (..., S, Q)
    return lp.sum(axis=-1)


def symbol_probs(llrs, c):
    llrs = np.asarray(llrs, dtype=float)
    return np.prod(bit_prob_from_llr(llrs[..., None, :], c.signs), axis=-1)


def symbol_stats(llrs, c):
    """Mean and variance of a symbol under independent bit priors.

    Returns ``(mean, var)`` with shapes ``llrs.shape[:-1]``.
    """
    llrs = np.asarray(llrs, dtype=float)
    p = symbol_probs(llrs, c)
    mean = p @ c.points
    var = np.sum(p * np.abs(c.points - mean[..., None]) ** 2, axis=-1)
    zero = np.all(llrs == 0, axis=-1)
    mean = np.where(zero, 0.0, mean)
    var = np.where(zero, 1.0, np.clip(var, 0.0, None))
    return (mean[()], var[()]) if mean.ndim == 0 else (mean, var)


@dataclass(eq=False)
class PriorStats:
    """Statistics of the symbols of a (stack of) symbol vector(s).

    Arrays carry the leading shape ``(..., N)`` of the symbol positions.
    """

    llr: np.ndarray        # (..., N, Q)
    bit_prob: np.ndarray   # (..., N, Q), Pr(bit = +1)
    sym_mean: np.ndarray   # (..., N)
    sym_var: np.ndarray    # (..., N)
    log_prior: np.ndarray  # (..., N, 2**Q)

    @classmethod
    def from_llrs(cls, llr, c):
        llr = np.asarray(llr, dtype=float)
        mean, var = symbol_stats(llr, c)
        return cls(llr=llr, bit_prob=bit_prob_from_llr(llr, 1),
                   sym_mean=np.asarray(mean, dtype=complex), sym_var=np.asarray(var, dtype=float),
                   log_prior=symbol_log_priors(llr, c))

    @classmethod
    def uniform(cls, shape, c):
        """Zero a priori information for symbol positions of ``shape``."""
        shape = (shape,) if np.isscalar(shape) else tuple(shape)
        return cls.from_llrs(np.zeros(shape + (c.Q,)), c)

    def take(self, perm):
        """Reorder symbol positions along the last symbol axis."""
        perm = np.asarray(perm)
        if perm.ndim == 1:
            pick = lambda a, extra: a[..., perm] if extra == 0 else a[..., perm, :]
        else:
            pick = lambda a, extra: np.take_along_axis(
                a, perm.reshape(perm.shape + (1,) * extra), axis=perm.ndim - 1)
        return PriorStats(llr=pick(self.llr, 1), bit_prob=pick(self.bit_prob, 1),
                          sym_mean=pick(self.sym_mean, 0), sym_var=pick(self.sym_var, 0),
                          log_prior=pick(self.log_prior, 1))

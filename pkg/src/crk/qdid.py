"""Quantile difference-in-differences on three-period panels.

The counterfactual distribution of the untreated outcome for treated
units in the post period is built from empirical CDF/quantile
compositions of pre-period changes and levels: each treated unit i is
assigned the value

    a_i = Q_{control post-change}(F_{treated pre-change}(pre-change_i))
        + Q_{control base level}(F_{treated first level}(first level_i)),

and the counterfactual CDF is the empirical CDF of {a_i}.  Quantile
treatment effects on the treated are differences between the treated
post-period quantile and the type-1 quantile of {a_i}.  All CDFs and
quantiles are raw sample equivalents, no smoothing.
"""

from dataclasses import dataclass

import numpy as np

from .between import PairwiseEstimates
from .quantile import empirical_quantiles, validate_grid

_PERIODS = ("t=-1", "t=0", "t=1")


@dataclass(frozen=True)
class PanelSample:
    """Outcome triples (t = -1, 0, 1) for the units of one group.

    Periods -1 and 0 are pre-intervention; period 1 is post.  The whole
    group shares one treatment status.
    """

    outcomes: np.ndarray  # (n, 3), columns ordered t = -1, 0, 1
    treated: bool

    def __post_init__(self):
        arr = np.asarray(self.outcomes, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != 3 or arr.shape[0] == 0:
            raise ValueError("panel needs an n x 3 outcome matrix with n >= 1")
        if not np.isfinite(arr).all():
            raise ValueError("panel outcomes must be finite")
        object.__setattr__(self, "outcomes", arr)
        object.__setattr__(self, "treated", bool(self.treated))

    @property
    def n(self) -> int:
        return self.outcomes.shape[0]

    @property
    def y_first(self) -> np.ndarray:  # t = -1
        return self.outcomes[:, 0]

    @property
    def y_base(self) -> np.ndarray:  # t = 0
        return self.outcomes[:, 1]

    @property
    def y_post(self) -> np.ndarray:  # t = 1
        return self.outcomes[:, 2]

    @property
    def pre_change(self) -> np.ndarray:  # y(0) - y(-1)
        return self.outcomes[:, 1] - self.outcomes[:, 0]

    @property
    def post_change(self) -> np.ndarray:  # y(1) - y(0)
        return self.outcomes[:, 2] - self.outcomes[:, 1]


def _check_pair(treated: PanelSample, control: PanelSample):
    if not treated.treated:
        raise ValueError("first panel must be the treated group")
    if control.treated:
        raise ValueError("second panel must be the control group")


def _own_cdf_levels(sample: np.ndarray) -> np.ndarray:
    """Empirical CDF of a sample evaluated at its own points.

    Evaluating at own sample points guarantees levels >= 1/n, so the
    composition with a type-1 quantile never sees level zero.
    """
    order = np.sort(sample)
    levels = np.searchsorted(order, sample, side="right") / sample.size
    assert (levels > 0.0).all()
    return levels


def counterfactual_values(treated: PanelSample, control: PanelSample) -> np.ndarray:
    """Constructed counterfactual post-period values, one per treated unit."""
    _check_pair(treated, control)
    change_levels = _own_cdf_levels(treated.pre_change)
    base_levels = _own_cdf_levels(treated.y_first)
    change_part = empirical_quantiles(control.post_change, change_levels)
    base_part = empirical_quantiles(control.y_base, base_levels)
    return np.asarray(change_part + base_part, dtype=float)


def counterfactual_cdf(treated: PanelSample, control: PanelSample, y: float) -> float:
    """CDF of the counterfactual untreated post-period outcome at y."""
    values = counterfactual_values(treated, control)
    return float(np.count_nonzero(values <= y)) / values.size


def qtt_estimate(treated: PanelSample, control: PanelSample, grid) -> np.ndarray:
    """Quantile treatment effect on the treated along the grid.

    Difference of the treated post-period empirical quantile and the
    type-1 quantile of the counterfactual value multiset.
    """
    gridv = validate_grid(grid)
    values = counterfactual_values(treated, control)
    return np.asarray(
        empirical_quantiles(treated.y_post, gridv)
        - empirical_quantiles(values, gridv),
        dtype=float,
    )


def pairwise_qdid_estimates(panels, grid) -> PairwiseEstimates:
    """Quantile DiD estimates for every (treated, control) panel pair.

    `panels` maps group ids to PanelSample; each estimate uses only the
    two groups it pairs.
    """
    gridv = validate_grid(grid)
    treated_ids = tuple(gid for gid, p in panels.items() if p.treated)
    control_ids = tuple(gid for gid, p in panels.items() if not p.treated)
    if not treated_ids or not control_ids:
        raise ValueError("need at least one treated and one control panel")
    values = {
        (a, b): qtt_estimate(panels[tid], panels[cid], gridv)
        for a, tid in enumerate(treated_ids)
        for b, cid in enumerate(control_ids)
    }
    return PairwiseEstimates(
        grid=gridv, values=values, treated_ids=treated_ids, control_ids=control_ids
    )

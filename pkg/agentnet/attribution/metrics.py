from collections import namedtuple

import numpy as np
from scipy.special import logsumexp
from scipy.stats import entropy

from .models import ImportanceReport, MetricError

IMPORTANCE_FLOOR = 1e-10

FLAG_SHAPLEY_SHIFTED = "shapley-shifted"
FLAG_IMPORTANCE_FLOORED = "importance-floored"


class Agreement(namedtuple("Agreement", ["kl", "listmle"])):
    """
    How well importance scores agree with Shapley values. Unpacks as (kl, listmle), flags record any adjustments.
    """

    flags = ()


def uniform_report(agent_ids):
    agent_ids = sorted(agent_ids)
    return ImportanceReport(per_agent={i: 1.0 / len(agent_ids) for i in agent_ids})


def listmle(scores, order):
    """
    Negative log likelihood of a ranking under the Plackett-Luce model of the given scores
    """
    ranked = np.asarray(scores, dtype=float)[list(order)]
    return float(sum(logsumexp(ranked[k:]) - ranked[k] for k in range(len(ranked))))


def agreement_metrics(importance, shapley):
    """
    Compares importance scores against Shapley values over the same agents

    :param importance: an ImportanceReport
    :param shapley: a ShapleyReport
    :return: Agreement with kl = KL(shapley || importance) and the ListMLE of the importance scores under the
        Shapley ranking
    """
    agent_ids = sorted(shapley.per_agent)
    if sorted(importance.per_agent) != agent_ids:
        raise MetricError(
            "Importance agents %s don't match Shapley agents %s" % (sorted(importance.per_agent), agent_ids)
        )

    flags = []

    p = np.array([shapley.per_agent[i] for i in agent_ids], dtype=float)
    if (p < 0).any():
        p = p - p.min()
        flags.append(FLAG_SHAPLEY_SHIFTED)
    if p.sum() <= 0:
        raise MetricError("Shapley values have no mass to compare")
    p = p / p.sum()

    q = np.array([importance.per_agent[i] for i in agent_ids], dtype=float)
    if (q < 0).any() or q.sum() <= 0:
        raise MetricError("Importance scores have no mass to compare")
    q = q / q.sum()
    if (q == 0).any():
        q = np.maximum(q, IMPORTANCE_FLOOR)
        q = q / q.sum()
        flags.append(FLAG_IMPORTANCE_FLOORED)

    # best Shapley value first, ties to the lower agent id
    order = sorted(range(len(agent_ids)), key=lambda k: (-p[k], agent_ids[k]))

    agreement = Agreement(float(entropy(p, q)), listmle(q, order))
    agreement.flags = tuple(flags)
    return agreement

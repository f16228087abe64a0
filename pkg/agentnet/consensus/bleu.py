"""
Consistency of a layer's answers: sentence BLEU, greedy consistency classes and the quorum rule for stopping early
"""
from collections import namedtuple

from sacrebleu.metrics import BLEU

from agentnet.agents.extraction import NO_ANSWER

from .models import ConsensusPolicy

# nrefs:1|case:mixed|eff:no|tok:13a|smooth:exp
_scorer = BLEU(tokenize="13a", smooth_method="exp", effective_order=False, lowercase=False)


def bleu(candidate, reference):
    """
    Sentence-level BLEU of a candidate against one reference, scaled to [0, 1] and rounded to 4 decimal places.
    Identical texts score 1 even when too short to hold any 4-gram.
    """
    if candidate == reference:
        return 1.0
    if not candidate or not reference:
        return 0.0

    return round(_scorer.sentence_score(candidate, [reference]).score / 100.0, 4)


class ConsistencyClass(namedtuple("ConsistencyClass", ["answer", "members"])):
    """
    A group of agents whose answers are consistent. The answer is that of the member who founded the class.
    """

    __slots__ = ()

    @property
    def size(self):
        return len(self.members)


def consistency_classes(answers, policy=None):
    """
    Partitions (agent_id, answer) pairs into consistency classes, visiting agents in id order. In exact mode classes
    are equality groups. In BLEU mode an answer joins the first class whose founding answer it matches in either
    direction, otherwise it founds a new class. No-answer markers are always singletons.
    """
    policy = policy or ConsensusPolicy({})
    founders = []
    members = []

    for agent_id, answer in sorted(answers, key=lambda a: a[0]):
        match = None
        if answer != NO_ANSWER:
            for c, founder in enumerate(founders):
                if founder != NO_ANSWER and _consistent(answer, founder, policy):
                    match = c
                    break

        if match is None:
            founders.append(answer)
            members.append([agent_id])
        else:
            members[match].append(agent_id)

    return [ConsistencyClass(a, tuple(m)) for a, m in zip(founders, members)]


def _consistent(answer, founder, policy):
    if policy.mode == ConsensusPolicy.MODE_EXACT:
        return answer == founder

    return max(bleu(answer, founder), bleu(founder, answer)) >= policy.bleu_threshold


def largest_class(classes):
    """
    Gets the largest class, preferring the one holding the lowest agent id on ties
    """
    if not classes:
        return None
    return max(classes, key=lambda c: (c.size, -min(c.members)))


def quorum_size(active_count, fraction):
    """
    Gets ceil(fraction * active_count) computed exactly
    """
    return -((-fraction.numerator * active_count) // fraction.denominator)


def should_stop(classes, active_count, step, policy=None):
    policy = policy or ConsensusPolicy({})

    if not policy.enabled or step < policy.earliest_stop_step or active_count < 1 or not classes:
        return False

    return max(c.size for c in classes) >= quorum_size(active_count, policy.quorum_fraction)

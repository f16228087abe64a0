from .models import AttributionError


def normalize_ratings(raw):
    """
    Turns (NodeId, score) ratings into (NodeId, weight) pairs whose weights sum to 1
    """
    if not raw:
        raise AttributionError("Can't normalize an empty list of ratings")

    total = float(sum(score for _, score in raw))
    if total <= 0:
        raise AttributionError("Ratings must be positive, got %s" % [score for _, score in raw])

    return [(node, score / total) for node, score in raw]

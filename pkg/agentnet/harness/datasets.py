import random

from django.core.exceptions import ImproperlyConfigured

from agentnet.inference.models import TaskQuery
from agentnet.utils import derive_seed, json_decode


class Dataset(object):
    """
    Queries read from a JSON lines file, optionally sampled down to a fraction for team optimization
    """

    def __init__(self, path, entries, sample_fraction=None):
        self.path = path
        self.entries = entries
        self.sample_fraction = sample_fraction

    def groups(self, key):
        """
        Gets the entries split by the given tag, in first appearance order
        """
        groups = {}
        for entry in self.entries:
            groups.setdefault(entry.tag(key), []).append(entry)
        return groups

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def load_dataset(path, sample_fraction=None, seed=0):
    """
    Loads a dataset, keeping a seeded sample of the given fraction of its queries in file order
    """
    entries = []
    with open(path, "r", encoding="utf-8") as f:
        for num, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                entries.append(TaskQuery.from_json(json_decode(line)))
            except (ValueError, KeyError) as e:
                raise ImproperlyConfigured("Invalid record on line %d of %s: %s" % (num, path, e))

    query_ids = [e.query_id for e in entries]
    duplicates = sorted({q for q in query_ids if query_ids.count(q) > 1})
    if duplicates:
        raise ImproperlyConfigured("Dataset %s has duplicate query ids: %s" % (path, ", ".join(duplicates)))

    if sample_fraction is not None:
        if not 0 < sample_fraction <= 1:
            raise ImproperlyConfigured("Sample fraction must be in (0, 1]")

        size = max(1, int(round(len(entries) * sample_fraction))) if entries else 0
        keep = set(random.Random(derive_seed(seed, "sample")).sample(range(len(entries)), size))
        entries = [e for n, e in enumerate(entries) if n in keep]

    if not entries:
        raise ImproperlyConfigured("Dataset %s has no queries" % path)

    return Dataset(path, entries, sample_fraction)

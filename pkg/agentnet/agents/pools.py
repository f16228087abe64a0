import os

from django.core.exceptions import ImproperlyConfigured

from agentnet.network.models import AgentSpec, validate_pool
from agentnet.utils import atomic_write, json_encode, read_json

POOL_SCHEMA_VERSION = 1

KIND_POOL = "pool"
KIND_TEAM = "team"


def _agent_from_json(json_obj, base_dir):
    json_obj = dict(json_obj)
    prompt_file = json_obj.pop("role_prompt_file", None)
    if prompt_file:
        with open(os.path.join(base_dir, prompt_file), "r", encoding="utf-8") as f:
            json_obj["role_prompt"] = f.read().strip()
    return AgentSpec.from_json(json_obj)


def load_pool(path):
    """
    Loads a pool or team file, returning (agents, ranker). Files are either a list of agents or a document with
    "agents" and an optional "ranker". Role prompts may be inline or a file path relative to the pool file.
    """
    doc = read_json(path)
    base_dir = os.path.dirname(os.path.abspath(path))

    if isinstance(doc, list):
        doc = {"agents": doc}

    agents = [_agent_from_json(a, base_dir) for a in doc.get("agents", [])]
    validate_pool(agents)

    ranker = None
    if doc.get("ranker"):
        ranker = _agent_from_json(dict(doc["ranker"], agent_id=AgentSpec.RANKER_ID), base_dir)

    return agents, ranker


def team_doc(agents, ranker, group, source_ids, importance=None):
    return {
        "schema_version": POOL_SCHEMA_VERSION,
        "kind": KIND_TEAM,
        "group": group,
        "agents": [a.to_json() for a in agents],
        "ranker": ranker.to_json() if ranker else None,
        "source_agent_ids": list(source_ids),
        "importance": {str(i): v for i, v in sorted((importance or {}).items())},
    }


def write_team(path, pool, ranker, group, agent_ids, importance=None):
    """
    Writes a team file holding the given agents of the pool, renumbered 1..k in selection order
    """
    by_id = {a.agent_id: a for a in pool}
    missing = [i for i in agent_ids if i not in by_id]
    if missing:
        raise ImproperlyConfigured("Team agents %s aren't in the pool" % missing)

    team = [by_id[i].renumbered(n + 1) for n, i in enumerate(agent_ids)]
    atomic_write(path, json_encode(team_doc(team, ranker, group, agent_ids, importance), pretty=True))
    return team

"""
Transcript documents: one self-describing JSON document per run holding the pool, the run config, the query and the
whole network with its records. Attribution can be recomputed offline from a transcript alone.
"""
import os

from agentnet.utils import atomic_write, json_encode, read_json

from .models import AgentSpec, TffnGraph

TRANSCRIPT_SCHEMA_VERSION = 1

KIND_TRANSCRIPT = "transcript"


class SchemaVersionError(Exception):
    def __init__(self, path, found, expected):
        self.path = path
        self.found = found
        self.expected = expected

        super(SchemaVersionError, self).__init__(
            "%s has schema version %s but this version reads %s. Migrate it by re-running the stage that produced it."
            % (path, found, expected)
        )


def check_schema(doc, path, kind, expected=TRANSCRIPT_SCHEMA_VERSION):
    found = doc.get("schema_version")
    if found != expected or doc.get("kind") != kind:
        raise SchemaVersionError(path, "%s/%s" % (doc.get("kind"), found), "%s/%s" % (kind, expected))


def transcript_doc(result, pool, ranker, config, query, extra=None):
    doc = {
        "schema_version": TRANSCRIPT_SCHEMA_VERSION,
        "kind": KIND_TRANSCRIPT,
        "query": query.to_json(),
        "pool": [a.to_json() for a in pool],
        "ranker": ranker.to_json() if ranker else None,
        "config": config.to_json(),
        "graph": result.graph.to_json(),
        "result": result.summary(),
    }
    if extra:
        doc.update(extra)
    return doc


def write_transcript(path, result, pool, ranker, config, query, extra=None):
    atomic_write(path, json_encode(transcript_doc(result, pool, ranker, config, query, extra), pretty=True))


def read_transcript(path):
    """
    Reads a transcript document, returning the raw document with `pool`, `ranker` and `graph` decoded
    """
    doc = read_json(path)
    check_schema(doc, path, KIND_TRANSCRIPT)

    doc["pool"] = [AgentSpec.from_json(a) for a in doc["pool"]]
    doc["ranker"] = AgentSpec.from_json(doc["ranker"]) if doc.get("ranker") else None
    doc["graph"] = TffnGraph.from_json(doc["graph"], query=doc["query"].get("prompt"))
    return doc


def list_transcripts(directory):
    if not os.path.isdir(directory):
        return []
    return sorted(os.path.join(directory, f) for f in os.listdir(directory) if f.endswith(".json"))

from abc import ABCMeta, abstractmethod
from collections import namedtuple

from django.conf import settings
from django.core.exceptions import ImproperlyConfigured
from django.utils.module_loading import import_string

Decoding = namedtuple("Decoding", ["temperature", "max_tokens"])

_BACKENDS = {}


class AgentFailure(Exception):
    def __init__(self, agent_id, cause):
        super(AgentFailure, self).__init__("Agent %s failed: %s" % (agent_id, cause))
        self.agent_id = agent_id
        self.cause = cause


class BackendResponse(object):
    def __init__(self, text, call_cost=1, degenerate=False):
        self.text = text
        self.call_cost = call_cost
        self.degenerate = degenerate

    def __repr__(self):
        return "BackendResponse(%r, call_cost=%d)" % (self.text[:40], self.call_cost)


class BaseBackend(metaclass=ABCMeta):
    """
    Base class for agent backends
    """

    @abstractmethod
    def execute(self, spec, bundle, decoding, context):  # pragma: no cover
        """
        Produces the response of an agent to a prompt

        :param spec: the AgentSpec being executed
        :param bundle: the PromptBundle to respond to
        :param decoding: the Decoding settings
        :param context: the ExecutionContext of the node (query, step, ledger, gateway)
        :return: a BackendResponse
        """


def get_backend(kind):
    """
    Gets the backend for the given kind as configured in settings.AGENT_BACKENDS
    """
    if kind not in _BACKENDS:
        class_path = settings.AGENT_BACKENDS.get(kind)
        if not class_path:
            raise ImproperlyConfigured("No backend configured for agent kind: %s" % kind)

        _BACKENDS[kind] = import_string(class_path)()

    return _BACKENDS[kind]

import hashlib
import json
import logging
import os
import time

import requests
from confmodel import Config
from confmodel import fields
from django.conf import settings
from django.core.exceptions import ImproperlyConfigured

from agentnet.utils import atomic_write, json_encode, read_json

from .ledger import LEDGER

logger = logging.getLogger(__name__)

TRANSIENT_STATUS_CODES = (429, 500, 502, 503, 504)


class GatewayError(Exception):
    def __init__(self, message, status_code=None):
        super(GatewayError, self).__init__(message)
        self.status_code = status_code


class GatewayConfig(Config):
    """
    How to reach a chat-completion endpoint
    """

    endpoint_url = fields.ConfigText("The chat completions URL", required=True)
    api_key_env = fields.ConfigText("Name of the environment variable holding the API key", default="OPENAI_API_KEY")
    model_name = fields.ConfigText("The model to request", required=True)
    request_timeout = fields.ConfigFloat("Seconds to wait for each attempt", default=60.0)
    max_retries = fields.ConfigInt("Retries after the first attempt for transient failures", default=3)
    backoff_base = fields.ConfigFloat("Seconds before the first retry, doubled on each retry", default=1.0)

    def post_validate(self):
        if self.max_retries < 0:
            self.raise_config_error("max_retries can't be negative")
        if self.request_timeout <= 0:
            self.raise_config_error("request_timeout must be positive")

    @classmethod
    def from_settings(cls, **overrides):
        return cls(dict(settings.LLM_GATEWAY, **overrides))


def build_request(model_name, system_text, user_text, temperature, max_tokens):
    messages = []
    if system_text:
        messages.append({"role": "system", "content": system_text})
    messages.append({"role": "user", "content": user_text})

    return {"model": model_name, "messages": messages, "temperature": temperature, "max_tokens": max_tokens}


def request_key(body):
    """
    Gets the fixture key of a request body: SHA-256 over its canonical JSON
    """
    canonical = json.dumps(body, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class ChatGateway(object):
    """
    Sends chat-completion requests, retrying transient failures. Every attempt is counted in the ledger.
    """

    def __init__(self, config=None, record_dir=None, ledger=None):
        self.config = config or GatewayConfig.from_settings()
        self.record_dir = record_dir
        self.ledger = ledger or LEDGER
        self.session = requests.Session()
        self.session.headers.update({"Content-Type": "application/json"})

    def get_api_key(self):
        api_key = os.environ.get(self.config.api_key_env, "").strip()
        if not api_key:
            raise ImproperlyConfigured("Missing API key, set the %s environment variable" % self.config.api_key_env)
        return api_key

    def chat(
        self, system_text, user_text, temperature=0.0, max_tokens=2048, agent_id=None, query_id=None, ledger=None
    ):
        """
        Gets the reply to a single system + user exchange

        :param system_text: the system message, may be empty
        :param user_text: the user message
        :param temperature: sampling temperature in [0, 2]
        :param max_tokens: completion token limit
        :param agent_id: the agent the call is made for, for accounting
        :param query_id: the query the call is made for, for accounting
        :param ledger: the ledger to count attempts in, defaults to the gateway's
        :return: the reply text
        """
        ledger = ledger or self.ledger
        headers = {"Authorization": "Bearer %s" % self.get_api_key()}
        body = build_request(self.config.model_name, system_text, user_text, temperature, max_tokens)

        last_status = None
        last_error = None

        for attempt in range(self.config.max_retries + 1):
            try:
                response = self.session.post(
                    self.config.endpoint_url, json=body, headers=headers, timeout=self.config.request_timeout
                )
                last_status = response.status_code
            except (requests.ConnectionError, requests.Timeout) as e:
                last_status, last_error = None, e
            else:
                if response.status_code == 200:
                    try:
                        text = response.json()["choices"][0]["message"]["content"]
                    except (ValueError, KeyError, IndexError, TypeError) as e:
                        ledger.record(agent_id, query_id, success=False)
                        raise GatewayError("Malformed completion response: %s" % e, last_status)

                    ledger.record(agent_id, query_id, success=True)
                    self.record_fixture(body, text)
                    return text

                last_error = response.text[:200]

                if response.status_code not in TRANSIENT_STATUS_CODES:
                    ledger.record(agent_id, query_id, success=False)
                    raise GatewayError("Request rejected with status %d: %s" % (last_status, last_error), last_status)

            ledger.record(agent_id, query_id, success=False)

            if attempt < self.config.max_retries:
                delay = self.config.backoff_base * (2 ** attempt)
                logger.warning(
                    "Attempt %d for agent %s failed (status=%s), retrying in %.1fs"
                    % (attempt + 1, agent_id, last_status, delay)
                )
                if delay > 0:
                    time.sleep(delay)

        logger.error("Giving up on agent %s after %d attempts" % (agent_id, self.config.max_retries + 1))
        raise GatewayError(
            "Request failed after %d attempts: %s" % (self.config.max_retries + 1, last_error), last_status
        )

    def record_fixture(self, body, text):
        if self.record_dir:
            path = os.path.join(self.record_dir, "%s.json" % request_key(body))
            atomic_write(path, json_encode({"request": body, "response": text}, pretty=True))


class ReplayGateway(ChatGateway):
    """
    Serves recorded responses instead of calling the endpoint, for fully offline runs
    """

    def __init__(self, config=None, fixtures_dir=None, ledger=None):
        super(ReplayGateway, self).__init__(config, ledger=ledger)
        self.fixtures_dir = fixtures_dir or settings.GATEWAY_FIXTURES_DIR

    def chat(
        self, system_text, user_text, temperature=0.0, max_tokens=2048, agent_id=None, query_id=None, ledger=None
    ):
        ledger = ledger or self.ledger
        body = build_request(self.config.model_name, system_text, user_text, temperature, max_tokens)
        path = os.path.join(self.fixtures_dir, "%s.json" % request_key(body))

        if not os.path.exists(path):
            ledger.record(agent_id, query_id, success=False)
            raise GatewayError("No recorded response for request %s" % request_key(body))

        ledger.record(agent_id, query_id, success=True)
        return read_json(path)["response"]


def get_gateway(offline=False, record_dir=None):
    config = GatewayConfig.from_settings()
    if offline:
        return ReplayGateway(config)
    return ChatGateway(config, record_dir=record_dir)

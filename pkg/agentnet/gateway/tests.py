import json
import os
import tempfile
from unittest import mock

import requests
import responses
from confmodel.errors import ConfigError
from django.core.exceptions import ImproperlyConfigured

from agentnet.test import BaseAgentNetTest

from . import LEDGER, CallLedger, ledger_snapshot, reset_ledger
from .client import ChatGateway, GatewayConfig, GatewayError, ReplayGateway, build_request, get_gateway, request_key

URL = "https://api.openai.com/v1/chat/completions"


def completion(text):
    return {"id": "chatcmpl-1", "choices": [{"index": 0, "message": {"role": "assistant", "content": text}}]}


@mock.patch.dict(os.environ, {"OPENAI_API_KEY": "sk-test"})
class ChatGatewayTest(BaseAgentNetTest):
    def setUp(self):
        super(ChatGatewayTest, self).setUp()

        self.gateway = ChatGateway(GatewayConfig.from_settings(backoff_base=0.0))

    @responses.activate
    def test_chat(self):
        responses.add(responses.POST, URL, json=completion("The answer is (B)."), status=200)

        text = self.gateway.chat("You are a physicist.", "Which option?", temperature=0.2, max_tokens=100, agent_id=3)
        self.assertEqual(text, "The answer is (B).")

        self.assertEqual(len(responses.calls), 1)
        request = responses.calls[0].request
        self.assertEqual(request.headers["Authorization"], "Bearer sk-test")
        self.assertEqual(
            json.loads(request.body),
            {
                "model": "gpt-3.5-turbo",
                "messages": [
                    {"role": "system", "content": "You are a physicist."},
                    {"role": "user", "content": "Which option?"},
                ],
                "temperature": 0.2,
                "max_tokens": 100,
            },
        )

        self.assertEqual(LEDGER.total_calls, 1)
        self.assertEqual(LEDGER.logical_calls, 1)
        self.assertEqual(LEDGER.per_agent_calls[3], 1)
        self.assertTrue(LEDGER.is_conserved())

    @responses.activate
    def test_chat_retries_transient_failures(self):
        responses.add(responses.POST, URL, body="overloaded", status=503)
        responses.add(responses.POST, URL, body=requests.ConnectionError("connection reset"))
        responses.add(responses.POST, URL, json=completion("ok"), status=200)

        self.assertEqual(self.gateway.chat("", "Hi", agent_id=1, query_id="q1"), "ok")

        self.assertEqual(len(responses.calls), 3)
        self.assertEqual(LEDGER.total_calls, 3)
        self.assertEqual(LEDGER.logical_calls, 1)
        self.assertEqual(LEDGER.per_query_calls["q1"], 3)

        # no system message when the role prompt is empty
        self.assertEqual(json.loads(responses.calls[2].request.body)["messages"], [{"role": "user", "content": "Hi"}])

    @responses.activate
    def test_chat_gives_up(self):
        responses.add(responses.POST, URL, body="server error", status=500)

        with self.assertRaises(GatewayError) as context:
            self.gateway.chat("", "Hi", agent_id=1)

        self.assertEqual(context.exception.status_code, 500)
        self.assertEqual(len(responses.calls), 4)
        self.assertEqual(LEDGER.total_calls, 4)
        self.assertEqual(LEDGER.logical_calls, 0)

    @responses.activate
    def test_chat_rejected(self):
        responses.add(responses.POST, URL, body="bad request", status=400)
        responses.add(responses.POST, URL, json={"choices": []}, status=200)

        with self.assertRaises(GatewayError) as context:
            self.gateway.chat("", "Hi")

        self.assertEqual(context.exception.status_code, 400)
        self.assertEqual(len(responses.calls), 1)

        # a malformed completion isn't retried either
        self.assertRaises(GatewayError, self.gateway.chat, "", "Hi")

        self.assertEqual(LEDGER.total_calls, 2)
        self.assertEqual(LEDGER.logical_calls, 0)

    @responses.activate
    def test_scoped_ledger(self):
        responses.add(responses.POST, URL, json=completion("ok"), status=200)

        run_ledger = CallLedger(parent=LEDGER)
        self.gateway.chat("", "Hi", agent_id=2, query_id="q7", ledger=run_ledger)

        self.assertEqual(run_ledger.total_calls, 1)
        self.assertEqual(LEDGER.total_calls, 1)
        self.assertEqual(run_ledger.to_json()["per_agent_calls"], {"2": 1})

    @mock.patch.dict(os.environ, {"OPENAI_API_KEY": ""})
    @responses.activate
    def test_missing_api_key(self):
        self.assertRaises(ImproperlyConfigured, self.gateway.chat, "", "Hi")

        self.assertEqual(len(responses.calls), 0)
        self.assertEqual(LEDGER.total_calls, 0)

    @responses.activate
    def test_record_and_replay(self):
        responses.add(responses.POST, URL, json=completion("recorded reply"), status=200)

        with tempfile.TemporaryDirectory() as directory:
            config = GatewayConfig.from_settings(backoff_base=0.0)
            recorder = ChatGateway(config, record_dir=directory)
            recorder.chat("System", "User", max_tokens=50)

            key = request_key(build_request("gpt-3.5-turbo", "System", "User", 0.0, 50))
            self.assertEqual(os.listdir(directory), ["%s.json" % key])

            replay = ReplayGateway(config, fixtures_dir=directory)
            self.assertEqual(replay.chat("System", "User", max_tokens=50, agent_id=1), "recorded reply")
            self.assertRaises(GatewayError, replay.chat, "System", "Other", max_tokens=50, agent_id=1)

        self.assertEqual(len(responses.calls), 1)
        self.assertEqual(LEDGER.total_calls, 3)
        self.assertEqual(LEDGER.logical_calls, 2)


class GatewayConfigTest(BaseAgentNetTest):
    def test_config(self):
        config = GatewayConfig({"endpoint_url": "http://localhost:8000/v1/chat/completions", "model_name": "m"})
        self.assertEqual(config.api_key_env, "OPENAI_API_KEY")
        self.assertEqual(config.max_retries, 3)
        self.assertEqual(config.request_timeout, 60.0)

        self.assertRaises(ConfigError, GatewayConfig, {"model_name": "m"})
        negative = {"endpoint_url": "http://x", "model_name": "m", "max_retries": -1}
        self.assertRaises(ConfigError, GatewayConfig, negative)

        self.assertIsInstance(get_gateway(offline=True), ReplayGateway)
        self.assertNotIsInstance(get_gateway(), ReplayGateway)

    def test_request_key(self):
        body = build_request("m", "", "Hi", 0.0, 10)
        self.assertEqual(body["messages"], [{"role": "user", "content": "Hi"}])
        self.assertEqual(request_key(body), request_key(dict(reversed(list(body.items())))))
        self.assertNotEqual(request_key(body), request_key(build_request("m", "", "Hi", 0.5, 10)))


class CallLedgerTest(BaseAgentNetTest):
    def test_ledger(self):
        ledger = CallLedger()
        ledger.record(1, "q1")
        ledger.record(1, "q1", success=False)
        ledger.record(None, "q2")

        self.assertEqual(ledger.total_calls, 3)
        self.assertEqual(ledger.logical_calls, 2)
        self.assertEqual(ledger.per_agent_calls, {1: 2, "-": 1})
        self.assertEqual(ledger.per_query_calls, {"q1": 2, "q2": 1})
        self.assertTrue(ledger.is_conserved())

        snapshot = ledger.snapshot()
        ledger.reset()
        self.assertEqual(ledger.total_calls, 0)
        self.assertEqual(snapshot.total_calls, 3)

        LEDGER.record(4, "q1")
        self.assertEqual(ledger_snapshot().total_calls, 1)
        reset_ledger()
        self.assertEqual(LEDGER.total_calls, 0)

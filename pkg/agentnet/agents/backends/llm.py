from agentnet.gateway import GatewayError, get_gateway

from . import AgentFailure, BackendResponse, BaseBackend


class LLMBackend(BaseBackend):
    """
    Agents answered by a chat-completion model through the gateway of the run
    """

    def execute(self, spec, bundle, decoding, context):
        gateway = context.gateway or get_gateway()
        try:
            text = gateway.chat(
                bundle.system_text,
                bundle.user_text,
                temperature=decoding.temperature,
                max_tokens=decoding.max_tokens,
                agent_id=spec.agent_id,
                query_id=context.query_id,
                ledger=context.ledger,
            )
        except GatewayError as e:
            raise AgentFailure(spec.agent_id, e)

        return BackendResponse(text, call_cost=1)

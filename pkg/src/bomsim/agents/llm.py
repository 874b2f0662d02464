"""Agent backed by a remote chat-completion model."""

from __future__ import annotations

from ..llm_client import ChatClient
from ..protocol import Query
from ..sampling import SamplingConfig
from .prompts import PromptBundle


class LlmAgent:
    kind = "llm"

    def __init__(self, client: ChatClient, sampling: SamplingConfig, max_tokens: int | None = None) -> None:
        self.client = client
        self.sampling = sampling
        self.max_tokens = max_tokens

    def respond(self, prompt: PromptBundle, query: Query, attempt: int) -> str:
        return self.client.chat_complete(prompt.messages(), self.sampling, self.max_tokens)

"""Response bodies of the two remote chat-completion dialects (consumed fields only)."""

from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field


class OpenAIMessage(BaseModel):
    model_config = ConfigDict(extra="ignore")

    role: str = "assistant"
    content: Optional[str] = None


class OpenAIChoice(BaseModel):
    model_config = ConfigDict(extra="ignore")

    index: int = 0
    message: OpenAIMessage
    finish_reason: Optional[str] = None


class OpenAIUsage(BaseModel):
    model_config = ConfigDict(extra="ignore")

    prompt_tokens: Optional[int] = None
    completion_tokens: Optional[int] = None


class OpenAIChatResponse(BaseModel):
    model_config = ConfigDict(extra="ignore")

    id: Optional[str] = None
    model: Optional[str] = None
    choices: List[OpenAIChoice] = Field(min_length=1)
    usage: Optional[OpenAIUsage] = None


class AnthropicContentBlock(BaseModel):
    model_config = ConfigDict(extra="ignore")

    type: str
    text: Optional[str] = None


class AnthropicUsage(BaseModel):
    model_config = ConfigDict(extra="ignore")

    input_tokens: Optional[int] = None
    output_tokens: Optional[int] = None


class AnthropicMessageResponse(BaseModel):
    model_config = ConfigDict(extra="ignore")

    id: Optional[str] = None
    model: Optional[str] = None
    content: List[AnthropicContentBlock]
    stop_reason: Optional[str] = None
    usage: Optional[AnthropicUsage] = None

    def text(self) -> str:
        return "".join(block.text or "" for block in self.content if block.type == "text")

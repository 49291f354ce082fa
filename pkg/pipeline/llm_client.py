"""
Uniform chat-completion client.

Wraps provider adapters with request validation, the retry policy, per-provider
rate limiting and the content-addressed response cache. One ``LLMClient`` is
shared by all runner workers.
"""

import threading
import time
from contextlib import contextmanager
from pathlib import Path
from typing import Callable, Dict, Optional, Protocol, Union

from models.config import HarnessConfig, ProviderDialect
from models.domain import Label
from models.llm import ChatRole, CompletionRequest, CompletionResponse, RetryPolicy
from pipeline.config_manager import provider_settings
from pipeline.errors import BadRequestError, ConfigurationError, ProviderError
from pipeline.mock_provider import MockProvider, parse_mock_mode
from pipeline.providers import CompletionProvider, ProviderFactory
from pipeline.response_cache import ResponseCache
from utils.helpers import sha256_hex
from utils.logging import get_pipeline_logger

logger = get_pipeline_logger("llm_client")

Sleep = Callable[[float], None]
Clock = Callable[[], float]


class CompletionClient(Protocol):
    def generate(self, request: CompletionRequest) -> CompletionResponse:
        ...


def canonical_digest(request: CompletionRequest) -> str:
    return sha256_hex(request.canonical_bytes())


def validate_request(request: CompletionRequest) -> None:
    if not request.messages:
        raise BadRequestError("Request has no messages", request.provider_id)
    if request.messages[-1].role is not ChatRole.USER:
        raise BadRequestError("Last message must have role 'user'", request.provider_id)
    for message in request.messages:
        if message.role is ChatRole.USER and not message.content:
            raise BadRequestError("User messages must be non-empty", request.provider_id)


def complete(provider: CompletionProvider, request: CompletionRequest) -> CompletionResponse:
    """Single attempt; structural problems fail before any network activity."""
    validate_request(request)
    return provider.complete(request)


def complete_with_retry(
    call: Callable[[CompletionRequest], CompletionResponse],
    request: CompletionRequest,
    policy: RetryPolicy,
    sleep: Sleep = time.sleep,
) -> CompletionResponse:
    attempt = 1
    while True:
        try:
            return call(request)
        except ProviderError as e:
            if attempt >= policy.max_attempts or not policy.should_retry(e.error_class):
                raise
            delay = policy.backoff_seconds(attempt)
            logger.warning(
                f"{e.error_class.value} from {request.provider_id} "
                f"(attempt {attempt}/{policy.max_attempts}), retrying in {delay:.2f}s"
            )
            sleep(delay)
            attempt += 1


class RateLimiter:
    """Token bucket on requests per minute plus a cap on requests in flight."""

    def __init__(
        self,
        requests_per_minute: int,
        max_in_flight: int,
        clock: Clock = time.monotonic,
        sleep: Sleep = time.sleep,
    ):
        self.rate = requests_per_minute / 60.0
        self.capacity = float(requests_per_minute)
        self.tokens = self.capacity
        self.clock = clock
        self.sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()
        self._in_flight = threading.BoundedSemaphore(max_in_flight)

    def _take_token(self) -> None:
        while True:
            with self._lock:
                now = self.clock()
                self.tokens = min(self.capacity, self.tokens + (now - self._last) * self.rate)
                self._last = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                wait = (1.0 - self.tokens) / self.rate
            self.sleep(wait)

    @contextmanager
    def slot(self):
        self._in_flight.acquire()
        try:
            self._take_token()
            yield
        finally:
            self._in_flight.release()


def cached_complete(
    request: CompletionRequest,
    cache: Union[str, Path, ResponseCache, None],
    policy: RetryPolicy,
    call: Callable[[CompletionRequest], CompletionResponse],
    sleep: Sleep = time.sleep,
    on_hit: Optional[Callable[[], None]] = None,
) -> CompletionResponse:
    """
    Serve ``request`` from the cache, or call through the retry policy and store the reply.

    Args:
        request: Completion request; validated before the cache or provider is touched
        cache: Response cache, its directory, or None to bypass caching
        policy: Retry policy for the provider call
        call: Single-attempt completion, e.g. ``partial(complete, provider)``
        sleep: Backoff sleep
        on_hit: Called once for every cache hit

    Returns:
        CompletionResponse with ``from_cache`` set on hits
    """
    validate_request(request)
    if cache is not None and not isinstance(cache, ResponseCache):
        cache = ResponseCache(cache)
    digest = canonical_digest(request)

    if cache is not None:
        cached_text = cache.get(request, digest)
        if cached_text is not None:
            if on_hit is not None:
                on_hit()
            return CompletionResponse(text=cached_text, from_cache=True)

    response = complete_with_retry(call, request, policy, sleep)
    if cache is not None:
        cache.put(request, response.text, digest)
    return response


class LLMClient:
    """Thread-safe completion client over one or more providers."""

    def __init__(
        self,
        providers: Dict[str, CompletionProvider],
        policy: Optional[RetryPolicy] = None,
        cache_dir: Optional[Union[str, Path]] = None,
        limiters: Optional[Dict[str, RateLimiter]] = None,
        sleep: Sleep = time.sleep,
    ):
        self.providers = providers
        self.policy = policy or RetryPolicy()
        self.cache = ResponseCache(cache_dir) if cache_dir else None
        self.limiters = limiters or {}
        self.sleep = sleep
        self.provider_calls = 0
        self.cache_hits = 0
        self._lock = threading.Lock()

    def _provider(self, provider_id: str) -> CompletionProvider:
        if provider_id not in self.providers:
            raise ConfigurationError(f"Provider '{provider_id}' is not configured")
        return self.providers[provider_id]

    def _attempt(self, request: CompletionRequest) -> CompletionResponse:
        provider = self._provider(request.provider_id)
        with self._lock:
            self.provider_calls += 1
        limiter = self.limiters.get(request.provider_id)
        if limiter is None:
            return complete(provider, request)
        with limiter.slot():
            return complete(provider, request)

    def _count_hit(self) -> None:
        with self._lock:
            self.cache_hits += 1

    def generate(self, request: CompletionRequest) -> CompletionResponse:
        validate_request(request)
        self._provider(request.provider_id)
        return cached_complete(
            request, self.cache, self.policy, self._attempt, self.sleep, on_hit=self._count_hit
        )


def retry_policy_from_config(config: HarnessConfig) -> RetryPolicy:
    return RetryPolicy(
        max_attempts=config.max_attempts,
        base_backoff_ms=config.base_backoff_ms,
        backoff_multiplier=config.backoff_multiplier,
    )


def build_client(
    config: HarnessConfig,
    provider_id: str,
    golds: Optional[Dict[str, Label]] = None,
    sleep: Sleep = time.sleep,
) -> LLMClient:
    """Client for one provider id as configured; mock providers need ``config.mock``."""
    settings = provider_settings(config, provider_id)

    limiters: Dict[str, RateLimiter] = {}
    cache_dir = config.cache_dir
    if settings.dialect is ProviderDialect.MOCK:
        if not config.mock:
            raise ConfigurationError(f"Provider '{provider_id}' requires --mock <mode>")
        provider: CompletionProvider = MockProvider(
            parse_mock_mode(config.mock, golds), provider_id
        )
        # one namespace per script so modes never share entries
        if cache_dir:
            cache_dir = str(Path(cache_dir) / "mock" / sha256_hex(config.mock.encode("utf-8"))[:12])
    else:
        provider = ProviderFactory.create_provider(provider_id, settings)
        limiters[provider_id] = RateLimiter(
            settings.requests_per_minute or config.requests_per_minute,
            settings.max_in_flight or config.max_in_flight,
        )

    return LLMClient(
        {provider_id: provider},
        policy=retry_policy_from_config(config),
        cache_dir=cache_dir,
        limiters=limiters,
        sleep=sleep,
    )

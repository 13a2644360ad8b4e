from __future__ import annotations

import pytest

from gridscribe.llm import MockChatBackend, MockResponse, MockScript
from gridscribe.precheck import ConventionCatalog


@pytest.fixture(scope="session")
def catalog() -> ConventionCatalog:
    return ConventionCatalog.bundled()


def make_llm(*texts: str, tagged: dict[str, str] | None = None) -> MockChatBackend:
    """Mock chat backend from untagged responses plus a tag registry."""
    responses = [MockResponse(text=t, tag=tag) for tag, t in (tagged or {}).items()]
    responses += [MockResponse(text=t) for t in texts]
    return MockChatBackend(MockScript(responses=responses))

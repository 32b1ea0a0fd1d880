import pytest

from slicegate.pkcrypto import KeyPair

# RSA generation dominates test runtime; a small shared pool keeps most
# tests off the hot path.  Tests that need unrelated keys take different
# indices; tests that need full-width keys use `keypair_2048`.


@pytest.fixture(scope="session")
def key_pool():
    return [KeyPair.generate(1024) for _ in range(8)]


@pytest.fixture(scope="session")
def keypair_2048():
    return KeyPair.generate(2048)


def pytest_runtest_logreport(report):
    if report.when != "call" or "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    verdict = "PASS" if report.passed else "FAIL"
    print(f"\nACCEPTANCE {name}: {verdict}", flush=True)

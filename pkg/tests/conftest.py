from hypothesis import HealthCheck, settings

# numerical code under CI load can blow the default 200 ms deadline
settings.register_profile(
    "scmest",
    deadline=None,
    max_examples=50,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("scmest")

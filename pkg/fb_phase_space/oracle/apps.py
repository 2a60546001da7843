from django.apps import AppConfig


class OracleConfig(AppConfig):
    name = "fb_phase_space.oracle"
    verbose_name = "Truncated Fock-space reference"

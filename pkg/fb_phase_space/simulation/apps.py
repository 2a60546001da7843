from django.apps import AppConfig


class SimulationConfig(AppConfig):
    name = "fb_phase_space.simulation"
    verbose_name = "Forward-backward trajectory simulation"

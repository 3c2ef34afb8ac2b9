"""Noise schedules."""

from .schedules import NoiseSchedule, ScheduleKind

__all__ = ['NoiseSchedule', 'ScheduleKind']

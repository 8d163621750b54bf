"""Trajectory-occupancy observations for reinforcement-learning navigation.

Pipeline: an offline stage samples a motion-primitive bank from the robot's
velocity limits and classifies a robot-centered voxel grid into per-primitive
Priority/Support bands; online, each control step maps lidar hits into the
grid and scores every primitive with a normalized occupancy value in [0, 1].
Those values (stacked over recent steps, plus goal and previous command)
form the observation of a discrete-action navigation policy trained with
PPO, benchmarked against a normalized laser-scan baseline.
"""

__version__ = "0.1.0"

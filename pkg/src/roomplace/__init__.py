"""Furniture placement in rooms with an actor-critic agent, classic solvers and metrics."""

__version__ = "0.1.0"

from .agent import ActorCritic, ModelConfig, PlacementAgent, TrainConfig, solve_scene, train
from .baselines import (AnnealingPlacer, DFSPlacer, RandomPlacer, SolverBudget, anneal_solve,
                        dfs_solve, random_solve)
from .energy import EnergyBreakdown, EnergyWeights, total_energy
from .env import EnvConfig, PlacementEnv
from .metrics import graph_edit_distance, graph_report, layout_report
from .roles import RoleClassifier
from .scene import Layout, Placement, SceneGraph, SceneSpec, load_graph, load_layout, load_scene
from .viewpoint import SamplerConfig, sample_viewpoints

__all__ = [
    "ActorCritic", "AnnealingPlacer", "DFSPlacer", "EnergyBreakdown", "EnergyWeights",
    "EnvConfig", "Layout", "ModelConfig", "Placement", "PlacementAgent", "PlacementEnv",
    "RandomPlacer", "RoleClassifier", "SamplerConfig", "SceneGraph", "SceneSpec", "SolverBudget",
    "TrainConfig", "anneal_solve", "dfs_solve", "graph_edit_distance", "graph_report",
    "layout_report", "load_graph", "load_layout", "load_scene", "random_solve", "sample_viewpoints",
    "solve_scene", "total_energy", "train",
]

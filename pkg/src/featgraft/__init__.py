"""Feature integration for existing source trees.

Pipeline: load a project, build its import graph, embed its files, ask a
provider for a task plan, generate replacement files into a copy, and
check the copy statically.
"""
from featgraft.executor import apply_plan
from featgraft.parser import build_dependency_graph, execution_order
from featgraft.planner import FeatureRequest, build_schema, map_feature
from featgraft.project import Project, SourceFile, copy_project, diff_projects, load_project
from featgraft.validator import syntax_gate, validate
from featgraft.vectors import build_index, cosine_similarity, query_top_k

__version__ = "0.1.0"

__all__ = [
    "FeatureRequest",
    "Project",
    "SourceFile",
    "apply_plan",
    "build_dependency_graph",
    "build_index",
    "build_schema",
    "copy_project",
    "cosine_similarity",
    "diff_projects",
    "execution_order",
    "load_project",
    "map_feature",
    "query_top_k",
    "syntax_gate",
    "validate",
]

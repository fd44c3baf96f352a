#  Distributed under MIT license, see LICENSE file.
from gol_longtail.workflows.base import ExperimentWorkflow, RunRecord
from gol_longtail.workflows.synthetic import SyntheticWorkflow
from gol_longtail.workflows.annotated import AnnotatedWorkflow

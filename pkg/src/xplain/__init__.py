"""Model-agnostic explanation toolkit for tabular classifiers."""

from .attribution import (ABLATION, OCCLUSION, PERMUTATION, SHAPLEY,
                          AttributionMap, Explainer, bind_background, explain)
from .bench import BenchmarkSpec, generate, write_benchmark
from .counterfactual import (Counterfactual, CounterfactualQuery,
                             CounterfactualSet, check_constraints,
                             query_from_dict, query_to_dict, rank_results,
                             search_exhaustive, search_sampling)
from .dataset import LabeledDataset, load_dataset, load_schema
from .distance import DistanceMetric
from .edge_cases import (EdgeCase, EdgeCaseSet, EdgeCriterion, EdgeSummary,
                         FeaturePredicate, Locality, RiskFunction,
                         construct_edge_cases, mine_edge_cases,
                         summarize_edge_cases)
from .errors import (DataError, GridTooLargeError, LeafToggleError, QueryError,
                     SchemaError, StaleViewError, XplainError)
from .models import (CART, EXTERNAL_TABLE, LOGISTIC, CartTreeModel,
                     ExternalTableModel, LogisticModel, Model, model_from_dict,
                     model_from_json, train_model)
from .schema import Feature, FeatureSchema, Instance
from .tree import (CollapsedView, DecisionTree, SemanticDistanceConfig,
                   SuperleafSummary, check_semantic_ordering, collapse_to_depth,
                   frontier, induce_tree, prediction_range, superleaf_summary,
                   toggle_node)
from .verifiability import (AgreementTestResult, PlausibilityScore,
                            QualityScore, VerifiabilityReport,
                            agreement_analysis, plausibility, spearman,
                            verifiability_study, welch_upper_t)

__version__ = "0.1.0"

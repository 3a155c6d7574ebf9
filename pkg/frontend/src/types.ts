// Wire types of the monitor service HTTP API. The console renders these
// values as served; it never recomputes similarities or decisions.

export interface StateInfo {
  revision: number;
  class_labels: string[];
  counts: {
    known_classes: number;
    flagged: number;
    staged: number;
    train_samples: number;
  };
}

export interface ClusterMember {
  sample_id: string;
  similarity: number[] | null;
  distance_to_centroid: number | null;
}

export interface ClusterSummary {
  cluster_id: number;
  size: number;
  radius: number;
  similarity_profile: number[] | null;
  representatives: string[];
  members: ClusterMember[];
}

export interface ClustersResponse {
  revision: number;
  computed_at_revision: number;
  class_labels: string[];
  flagged_total: number;
  purity: number | null;
  clusters: ClusterSummary[];
}

export interface SampleDetail {
  sample_id: string;
  features: number[] | null;
  label: string | null;
  similarity: number[] | null;
  decisions: {
    revision: number;
    outcome: string;
    class_id: number | null;
    class_label: string | null;
  }[];
}

export interface LabelAssignmentBody {
  cluster_id: number;
  label: string;
  overrides: Record<string, string>;
}

export interface LabelsResponse {
  revision: number;
  class_labels: string[];
  flagged_total: number;
  updated: boolean;
  new_classes?: string[];
  replayed?: boolean;
}

export interface UpdateResponse {
  revision: number;
  class_labels: string[];
  flagged_total: number;
  updated: boolean;
  replayed?: boolean;
}

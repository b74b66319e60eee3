/** Wire types for the session server's viewer channel. */

export type Vec3 = [number, number, number];
export type Rgba = [number, number, number, number];

export interface SliceDescriptor {
  kind: "axis" | "oblique";
  axis?: number;
  index?: number;
  width: number;
  height: number;
  pixel_spacing: [number, number];
  origin: Vec3;
  basis: [Vec3, Vec3];
  window: number;
  level: number;
}

export interface AnnotationData {
  id: string;
  position: Vec3;
  color: Rgba;
  label: string;
  created_at: number;
}

export interface HelloMessage {
  type: "hello";
  seq: number;
  session_id: string;
  assets: {
    meshes: Record<string, string>;
    has_volume: boolean;
    volume_dims: [number, number, number] | null;
  };
  config: {
    threshold: number;
    decimation_mm: number;
    window: number;
    level: number;
    capture_window_ms: number;
  };
}

export interface SnapshotMessage {
  type: "snapshot";
  seq: number;
  session_id: string;
  registered: boolean;
  fre_mm: number | null;
  matrix: number[][] | null;
  anatomy_mode: AnatomyMode;
  ct_pose: Vec3 | null;
  trail: Vec3[];
  annotations: AnnotationData[];
  captures: Record<string, CaptureData>;
  slice: { descriptor: SliceDescriptor; image_id: string } | null;
  metrics: MetricsData;
  sample_count: number;
  flushed_count: number;
}

export interface CaptureData {
  n_samples: number;
  tracker_xyz: Vec3;
}

export interface MetricsData {
  hull_volume_mm3: number | null;
  path_length_mm: number | null;
  outlier_fraction: number | null;
}

export interface PoseMessage {
  type: "pose";
  seq: number;
  t: number;
  ct_xyz: Vec3;
  sample_count: number;
}

export interface TrailDeltaMessage {
  type: "trail_delta";
  seq: number;
  points: Vec3[];
  trail_length: number;
}

export interface AnnotationMessage {
  type: "annotation";
  seq: number;
  action: "add" | "remove";
  annotation?: AnnotationData;
  id?: string;
}

export interface SliceMessage {
  type: "slice";
  seq: number;
  descriptor: SliceDescriptor;
  image_id: string;
  url: string;
}

export interface MetricsMessage extends MetricsData {
  type: "metrics";
  seq: number;
  sample_count: number;
  flushed_count: number;
}

export interface RegistrationMessage {
  type: "registration";
  seq: number;
  fre_mm: number;
  matrix: number[][];
}

export interface AnatomyModeMessage {
  type: "anatomy_mode";
  seq: number;
  mode: AnatomyMode;
}

export interface CaptureMessage {
  type: "capture";
  seq: number;
  label: string;
  n_samples: number;
  tracker_xyz: Vec3;
}

export interface AckMessage {
  type: "ack";
  id?: string;
  cmd?: string;
  ok: boolean;
  error?: string;
  [key: string]: unknown;
}

export type ServerMessage =
  | HelloMessage
  | SnapshotMessage
  | PoseMessage
  | TrailDeltaMessage
  | AnnotationMessage
  | SliceMessage
  | MetricsMessage
  | RegistrationMessage
  | AnatomyModeMessage
  | CaptureMessage
  | AckMessage;

export type AnatomyMode = "full" | "collecting_system";

export type ConnectionStatus = "connecting" | "open" | "closed";

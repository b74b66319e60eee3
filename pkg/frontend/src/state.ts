/** Viewer state and the message reducer.
 *
 * Broadcasts carry a monotone sequence number; a delta is applied only
 * when its seq is newer than the state's, so replaying a snapshot plus
 * its deltas (in any overlapping combination) converges to the same
 * state as a fresh snapshot at the latest sequence number.
 */

import type {
  AnatomyMode,
  AnnotationData,
  CaptureData,
  ConnectionStatus,
  MetricsData,
  ServerMessage,
  SliceDescriptor,
  Vec3,
} from "./types.js";

export interface ViewerState {
  connection: ConnectionStatus;
  seq: number;
  lastPoseSeq: number;
  sessionId: string | null;
  assets: { meshes: Record<string, string>; hasVolume: boolean } | null;
  config: {
    threshold: number;
    decimationMm: number;
    window: number;
    level: number;
    captureWindowMs: number;
  } | null;
  registered: boolean;
  freMm: number | null;
  anatomyMode: AnatomyMode;
  ctPose: Vec3 | null;
  trail: Vec3[];
  annotations: AnnotationData[];
  captures: Record<string, CaptureData>;
  slice: { descriptor: SliceDescriptor; imageId: string } | null;
  metrics: MetricsData | null;
  sampleCount: number;
  flushedCount: number;
}

export function initialState(): ViewerState {
  return {
    connection: "connecting",
    seq: -1,
    lastPoseSeq: -1,
    sessionId: null,
    assets: null,
    config: null,
    registered: false,
    freMm: null,
    anatomyMode: "full",
    ctPose: null,
    trail: [],
    annotations: [],
    captures: {},
    slice: null,
    metrics: null,
    sampleCount: 0,
    flushedCount: 0,
  };
}

/** The part of the state that a snapshot fully determines. */
export interface NavStateView {
  seq: number;
  registered: boolean;
  freMm: number | null;
  anatomyMode: AnatomyMode;
  ctPose: Vec3 | null;
  trail: Vec3[];
  annotations: AnnotationData[];
  captures: Record<string, CaptureData>;
  sliceImageId: string | null;
  sampleCount: number;
}

export function navView(state: ViewerState): NavStateView {
  return {
    seq: state.seq,
    registered: state.registered,
    freMm: state.freMm,
    anatomyMode: state.anatomyMode,
    ctPose: state.ctPose,
    trail: state.trail,
    annotations: [...state.annotations].sort((a, b) => a.id.localeCompare(b.id)),
    captures: state.captures,
    sliceImageId: state.slice ? state.slice.imageId : null,
    sampleCount: state.sampleCount,
  };
}

export function applyMessage(state: ViewerState, msg: ServerMessage): ViewerState {
  switch (msg.type) {
    case "hello":
      return {
        ...state,
        sessionId: msg.session_id,
        assets: { meshes: msg.assets.meshes, hasVolume: msg.assets.has_volume },
        config: {
          threshold: msg.config.threshold,
          decimationMm: msg.config.decimation_mm,
          window: msg.config.window,
          level: msg.config.level,
          captureWindowMs: msg.config.capture_window_ms,
        },
      };

    case "snapshot":
      return {
        ...state,
        seq: msg.seq,
        lastPoseSeq: msg.seq,
        sessionId: msg.session_id,
        registered: msg.registered,
        freMm: msg.fre_mm,
        anatomyMode: msg.anatomy_mode,
        ctPose: msg.ct_pose,
        trail: msg.trail.slice(),
        annotations: msg.annotations.slice(),
        captures: { ...msg.captures },
        slice: msg.slice
          ? { descriptor: msg.slice.descriptor, imageId: msg.slice.image_id }
          : null,
        metrics: msg.metrics,
        sampleCount: msg.sample_count,
        flushedCount: msg.flushed_count,
      };

    case "ack":
      return state;
  }

  // every remaining message kind is a sequenced delta
  if (msg.seq <= state.seq) {
    return state;
  }
  const next: ViewerState = { ...state, seq: msg.seq };
  switch (msg.type) {
    case "pose":
      next.ctPose = msg.ct_xyz;
      next.sampleCount = msg.sample_count;
      next.lastPoseSeq = msg.seq;
      break;
    case "trail_delta": {
      const trail = state.trail.concat(msg.points);
      // the server caps the trail; mirror its eviction
      next.trail =
        trail.length > msg.trail_length ? trail.slice(trail.length - msg.trail_length) : trail;
      break;
    }
    case "annotation":
      if (msg.action === "add" && msg.annotation) {
        next.annotations = state.annotations
          .filter((a) => a.id !== msg.annotation!.id)
          .concat([msg.annotation]);
      } else if (msg.action === "remove" && msg.id) {
        next.annotations = state.annotations.filter((a) => a.id !== msg.id);
      }
      break;
    case "slice":
      next.slice = { descriptor: msg.descriptor, imageId: msg.image_id };
      break;
    case "metrics":
      next.metrics = {
        hull_volume_mm3: msg.hull_volume_mm3,
        path_length_mm: msg.path_length_mm,
        outlier_fraction: msg.outlier_fraction,
      };
      next.sampleCount = msg.sample_count;
      next.flushedCount = msg.flushed_count;
      break;
    case "registration":
      next.registered = true;
      next.freMm = msg.fre_mm;
      // CT-frame history restarts at registration, like the server's
      next.trail = [];
      next.ctPose = null;
      next.metrics = null;
      break;
    case "anatomy_mode":
      next.anatomyMode = msg.mode;
      break;
    case "capture":
      next.captures = {
        ...state.captures,
        [msg.label]: { n_samples: msg.n_samples, tracker_xyz: msg.tracker_xyz },
      };
      break;
  }
  return next;
}

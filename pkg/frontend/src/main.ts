/** Browser entry point: wires the session client, scene, and panel. */

import { SessionClient } from "./net.js";
import { RateLimiter } from "./ratelimit.js";
import { SceneView } from "./scene.js";
import { Panel } from "./ui.js";
import type { Rgba } from "./types.js";

function serverBase(): string {
  const override = new URLSearchParams(location.search).get("server");
  if (override) return `http://${override}`;
  return location.origin;
}

const base = serverBase();
const wsUrl = base.replace(/^http/, "ws") + "/ws";

const sceneHost = document.getElementById("scene")!;
const panelHost = document.getElementById("panel")!;

const client = new SessionClient(wsUrl, (url) => new WebSocket(url));
const scene = new SceneView(sceneHost, base);

const sliceLimiter = new RateLimiter<{ axis: number; index: number }>(
  ({ axis, index }) => {
    client.commands.send("set_slice", { axis, index }).catch((err) => {
      panel.note(`slice failed: ${err.message}`);
    });
  },
  10,
);

const panel = new Panel(
  panelHost,
  {
    captureFiducial(label) {
      panel.note(`capturing ${label}… hold the scope in the slot`);
      client.commands
        .send("capture_fiducial", { label })
        .then((ack) => panel.note(`captured ${label} (${ack.n_samples} samples)`))
        .catch((err) => panel.note(`capture ${label} failed: ${err.message}`));
    },
    register() {
      client.commands
        .send("register")
        .then((ack) => panel.note(`registered, FRE ${(ack.fre_mm as number).toFixed(2)} mm`))
        .catch((err) => panel.note(`registration failed: ${err.message}`));
    },
    annotateAtTip(color: Rgba) {
      client.commands
        .send("annotate", { color })
        .catch((err) => panel.note(`annotate failed: ${err.message}`));
    },
    setPlaceByClick() {
      /* mode read from panel.placeByClick on click */
    },
    removeAnnotation(id) {
      client.commands
        .send("remove_annotation", { annotation_id: id })
        .catch((err) => panel.note(`remove failed: ${err.message}`));
    },
    toggleAnatomy() {
      const next =
        client.state.anatomyMode === "full" ? "collecting_system" : "full";
      client.commands
        .send("set_anatomy_mode", { mode: next })
        .catch((err) => panel.note(`anatomy toggle failed: ${err.message}`));
    },
    setOpacity(opacity) {
      scene.setAnatomyOpacity(opacity);
    },
    setSlice(axis, index) {
      sliceLimiter.request({ axis, index });
    },
    exportSession() {
      client.commands
        .send("export")
        .then((ack) => panel.note(`exported to ${ack.dir}`))
        .catch((err) => panel.note(`export failed: ${err.message}`));
    },
  },
  base,
);

client.commands.onQueueChange((count) => panel.setQueueDepth(count));

client.onState((state, msg) => {
  panel.sync(state);
  if (msg?.type === "hello") {
    scene.loadAnatomy(state.assets?.meshes ?? {}).catch(() => {
      panel.note("anatomy mesh failed to load");
    });
    panel.setVolumeDims(msg.assets.volume_dims);
  }
});

sceneHost.addEventListener("pointerdown", (event) => {
  if (!panel.placeByClick || event.button !== 0) return;
  const point = scene.pickAnatomyPoint(event);
  if (point) {
    client.commands
      .send("annotate", { position: point, color: panel.selectedColor })
      .catch((err) => panel.note(`annotate failed: ${err.message}`));
  }
});

function animate(): void {
  requestAnimationFrame(animate);
  scene.render(client.state);
}

client.connect();
animate();

/** three.js scene: anatomy meshes, scope marker and trail, stone
 * annotations, and the CT slice plane. Rendering reads the latest
 * ViewerState snapshot inside the animation loop; no geometry analytics
 * happen here.
 */

import * as THREE from "three";
import { OrbitControls } from "three/addons/controls/OrbitControls.js";
import { OBJLoader } from "three/addons/loaders/OBJLoader.js";

import type { ViewerState } from "./state.js";
import type { AnatomyMode, SliceDescriptor, Vec3 } from "./types.js";

const MARKER_COLOR = 0x2ecc71; // green marker and trail
const TRAIL_CAPACITY = 200_000;

export class SceneView {
  readonly renderer: THREE.WebGLRenderer;
  readonly scene = new THREE.Scene();
  readonly camera: THREE.PerspectiveCamera;
  private controls: OrbitControls;
  private marker: THREE.Mesh;
  private trailLine: THREE.Line;
  private trailPositions = new Float32Array(TRAIL_CAPACITY * 3);
  private trailLength = 0;
  private annotationMeshes = new Map<string, THREE.Mesh>();
  private anatomyGroups = new Map<string, THREE.Group>();
  private slicePlane: THREE.Mesh | null = null;
  private sliceImageId: string | null = null;
  private anatomyOpacity = 0.35;
  private framed = false;

  constructor(
    private container: HTMLElement,
    private baseUrl: string,
  ) {
    this.renderer = new THREE.WebGLRenderer({ antialias: true });
    this.renderer.setPixelRatio(window.devicePixelRatio);
    container.appendChild(this.renderer.domElement);

    this.camera = new THREE.PerspectiveCamera(50, 1, 0.1, 5000);
    this.camera.position.set(120, 80, 120);
    this.controls = new OrbitControls(this.camera, this.renderer.domElement);

    this.scene.background = new THREE.Color(0x10151c);
    this.scene.add(new THREE.AmbientLight(0xffffff, 0.55));
    const key = new THREE.DirectionalLight(0xffffff, 1.2);
    key.position.set(150, 220, 120);
    this.scene.add(key);
    this.scene.add(new THREE.AxesHelper(20));

    this.marker = new THREE.Mesh(
      new THREE.SphereGeometry(1.6, 24, 16),
      new THREE.MeshPhongMaterial({ color: MARKER_COLOR }),
    );
    this.marker.visible = false;
    this.scene.add(this.marker);

    const trailGeometry = new THREE.BufferGeometry();
    trailGeometry.setAttribute(
      "position",
      new THREE.BufferAttribute(this.trailPositions, 3),
    );
    trailGeometry.setDrawRange(0, 0);
    this.trailLine = new THREE.Line(
      trailGeometry,
      new THREE.LineBasicMaterial({ color: MARKER_COLOR }),
    );
    this.trailLine.frustumCulled = false;
    this.scene.add(this.trailLine);

    const resize = () => {
      const w = container.clientWidth || 800;
      const h = container.clientHeight || 600;
      this.renderer.setSize(w, h);
      this.camera.aspect = w / h;
      this.camera.updateProjectionMatrix();
    };
    new ResizeObserver(resize).observe(container);
    resize();
  }

  async loadAnatomy(meshes: Record<string, string>): Promise<void> {
    const loader = new OBJLoader();
    await Promise.all(
      Object.entries(meshes).map(async ([name, url]) => {
        if (this.anatomyGroups.has(name)) return;
        const group = await loader.loadAsync(this.baseUrl + url);
        group.traverse((obj) => {
          if (obj instanceof THREE.Mesh) {
            obj.material = new THREE.MeshPhongMaterial({
              color: name === "collecting_system" ? 0xd9822b : 0xb8bfcc,
              transparent: true,
              opacity: this.anatomyOpacity,
              side: THREE.DoubleSide,
              depthWrite: false,
            });
          }
        });
        this.anatomyGroups.set(name, group);
        this.scene.add(group);
        if (!this.framed) {
          this.frameObject(group);
          this.framed = true;
        }
      }),
    );
  }

  private frameObject(object: THREE.Object3D): void {
    const box = new THREE.Box3().setFromObject(object);
    if (box.isEmpty()) return;
    const center = box.getCenter(new THREE.Vector3());
    const size = box.getSize(new THREE.Vector3()).length();
    this.controls.target.copy(center);
    this.camera.position.copy(center).add(new THREE.Vector3(size, size * 0.6, size));
    this.camera.updateProjectionMatrix();
  }

  setAnatomyOpacity(opacity: number): void {
    this.anatomyOpacity = opacity;
    for (const group of this.anatomyGroups.values()) {
      group.traverse((obj) => {
        if (obj instanceof THREE.Mesh) {
          (obj.material as THREE.MeshPhongMaterial).opacity = opacity;
        }
      });
    }
  }

  private syncAnatomy(mode: AnatomyMode): void {
    for (const [name, group] of this.anatomyGroups) {
      group.visible =
        mode === "collecting_system"
          ? name === "collecting_system" || this.anatomyGroups.size === 1
          : name === "full" || this.anatomyGroups.size === 1;
    }
  }

  private syncTrail(trail: Vec3[]): void {
    if (trail.length === this.trailLength) return;
    const n = Math.min(trail.length, TRAIL_CAPACITY);
    const start = trail.length - n;
    for (let i = 0; i < n; i++) {
      const p = trail[start + i]!;
      this.trailPositions[i * 3] = p[0];
      this.trailPositions[i * 3 + 1] = p[1];
      this.trailPositions[i * 3 + 2] = p[2];
    }
    this.trailLength = trail.length;
    const attr = this.trailLine.geometry.getAttribute("position") as THREE.BufferAttribute;
    attr.needsUpdate = true;
    this.trailLine.geometry.setDrawRange(0, n);
  }

  private syncAnnotations(state: ViewerState): void {
    const seen = new Set<string>();
    for (const annotation of state.annotations) {
      seen.add(annotation.id);
      let mesh = this.annotationMeshes.get(annotation.id);
      if (!mesh) {
        const [r, g, b] = annotation.color;
        mesh = new THREE.Mesh(
          new THREE.SphereGeometry(2.2, 20, 14),
          new THREE.MeshPhongMaterial({
            color: new THREE.Color(r / 255, g / 255, b / 255),
            transparent: true,
            opacity: 0.9,
          }),
        );
        this.annotationMeshes.set(annotation.id, mesh);
        this.scene.add(mesh);
      }
      mesh.position.set(...annotation.position);
    }
    for (const [id, mesh] of [...this.annotationMeshes]) {
      if (!seen.has(id)) {
        this.scene.remove(mesh);
        this.annotationMeshes.delete(id);
      }
    }
  }

  private syncSlice(state: ViewerState): void {
    const slice = state.slice;
    if (!slice) {
      if (this.slicePlane) this.slicePlane.visible = false;
      return;
    }
    if (slice.imageId === this.sliceImageId) return;
    this.sliceImageId = slice.imageId;
    const d = slice.descriptor;
    if (!this.slicePlane) {
      this.slicePlane = new THREE.Mesh(
        new THREE.PlaneGeometry(1, 1),
        new THREE.MeshBasicMaterial({
          side: THREE.DoubleSide,
          transparent: true,
          opacity: 0.92,
        }),
      );
      this.scene.add(this.slicePlane);
    }
    this.slicePlane.visible = true;
    this.placeSlicePlane(d);
    new THREE.TextureLoader().load(
      `${this.baseUrl}/slices/${slice.imageId}.png`,
      (texture) => {
        texture.flipY = false;
        texture.colorSpace = THREE.SRGBColorSpace;
        const material = this.slicePlane!.material as THREE.MeshBasicMaterial;
        material.map = texture;
        material.needsUpdate = true;
      },
    );
  }

  private placeSlicePlane(d: SliceDescriptor): void {
    const bu = new THREE.Vector3(...d.basis[0]);
    const bv = new THREE.Vector3(...d.basis[1]);
    const bn = new THREE.Vector3().crossVectors(bu, bv);
    const width = d.width * d.pixel_spacing[0];
    const height = d.height * d.pixel_spacing[1];
    const origin = new THREE.Vector3(...d.origin);
    const center = origin
      .clone()
      .addScaledVector(bu, width / 2)
      .addScaledVector(bv, height / 2);
    const rotation = new THREE.Matrix4().makeBasis(bu, bv, bn);
    this.slicePlane!.quaternion.setFromRotationMatrix(rotation);
    this.slicePlane!.position.copy(center);
    this.slicePlane!.scale.set(width, height, 1);
  }

  /** Raycast a pointer event against the visible anatomy. */
  pickAnatomyPoint(event: PointerEvent): Vec3 | null {
    const rect = this.renderer.domElement.getBoundingClientRect();
    const pointer = new THREE.Vector2(
      ((event.clientX - rect.left) / rect.width) * 2 - 1,
      -((event.clientY - rect.top) / rect.height) * 2 + 1,
    );
    const raycaster = new THREE.Raycaster();
    raycaster.setFromCamera(pointer, this.camera);
    const targets: THREE.Object3D[] = [];
    for (const group of this.anatomyGroups.values()) {
      if (group.visible) targets.push(group);
    }
    const hits = raycaster.intersectObjects(targets, true);
    const hit = hits[0];
    return hit ? [hit.point.x, hit.point.y, hit.point.z] : null;
  }

  render(state: ViewerState): void {
    if (state.ctPose) {
      this.marker.visible = true;
      this.marker.position.set(...state.ctPose);
    } else {
      this.marker.visible = false;
    }
    this.syncTrail(state.registered ? state.trail : []);
    this.syncAnnotations(state);
    this.syncAnatomy(state.anatomyMode);
    this.syncSlice(state);
    this.controls.update();
    this.renderer.render(this.scene, this.camera);
  }
}

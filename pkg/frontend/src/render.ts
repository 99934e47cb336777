// Canvas drawing. Pure display: everything here is derived from the
// session state on each animation frame, so skipping or repeating a
// render can never change what gets recorded.

import { FrameUpdate, SessionConfig, TrackGeometry } from "./protocol.js";
import { ClientSession } from "./session.js";

interface Camera {
  cx: number;
  cy: number;
  scale: number; // pixels per meter
}

interface Polyline extends Array<[number, number]> {}

function worldToScreen(cam: Camera, canvas: HTMLCanvasElement, x: number, y: number): [number, number] {
  // y grows upward in the world, downward on the canvas
  return [
    canvas.width / 2 + (x - cam.cx) * cam.scale,
    canvas.height / 2 - (y - cam.cy) * cam.scale,
  ];
}

function tracePolyline(
  ctx: CanvasRenderingContext2D,
  cam: Camera,
  canvas: HTMLCanvasElement,
  points: Polyline,
): void {
  ctx.beginPath();
  points.forEach(([x, y], i) => {
    const [sx, sy] = worldToScreen(cam, canvas, x, y);
    if (i === 0) ctx.moveTo(sx, sy);
    else ctx.lineTo(sx, sy);
  });
}

function drawTrack(
  ctx: CanvasRenderingContext2D,
  canvas: HTMLCanvasElement,
  cam: Camera,
  geometry: TrackGeometry,
): void {
  const track = geometry.track as {
    segments?: Polyline[];
    obstacles?: { x: number; y: number; radius: number }[];
    half_width?: number;
  };
  const halfWidth = track.half_width ?? 2;

  for (const seg of track.segments ?? []) {
    tracePolyline(ctx, cam, canvas, seg);
    ctx.lineCap = "round";
    ctx.lineJoin = "round";
    ctx.strokeStyle = "#2b2f36";
    ctx.lineWidth = 2 * halfWidth * cam.scale;
    ctx.stroke();
  }
  for (const seg of track.segments ?? []) {
    tracePolyline(ctx, cam, canvas, seg);
    ctx.strokeStyle = "#4a5160";
    ctx.lineWidth = 1;
    ctx.setLineDash([6, 8]);
    ctx.stroke();
    ctx.setLineDash([]);
  }
  for (const ob of track.obstacles ?? []) {
    const [sx, sy] = worldToScreen(cam, canvas, ob.x, ob.y);
    ctx.beginPath();
    ctx.arc(sx, sy, ob.radius * cam.scale, 0, 2 * Math.PI);
    ctx.fillStyle = "#8a4b3c";
    ctx.fill();
  }
}

function drawEgo(
  ctx: CanvasRenderingContext2D,
  canvas: HTMLCanvasElement,
  cam: Camera,
  frame: FrameUpdate,
  humanDriving: boolean,
): void {
  const [sx, sy] = worldToScreen(cam, canvas, frame.x, frame.y);
  const r = 0.9 * cam.scale;
  ctx.save();
  ctx.translate(sx, sy);
  ctx.rotate(-frame.heading); // canvas y is flipped
  ctx.beginPath();
  ctx.moveTo(r * 1.4, 0);
  ctx.lineTo(-r * 0.8, r * 0.7);
  ctx.lineTo(-r * 0.8, -r * 0.7);
  ctx.closePath();
  ctx.fillStyle = humanDriving ? "#e0a73c" : "#3c8fe0";
  ctx.fill();
  ctx.restore();
}

function drawGauge(
  ctx: CanvasRenderingContext2D,
  canvas: HTMLCanvasElement,
  frame: FrameUpdate,
  config: SessionConfig | null,
): void {
  const w = 220;
  const h = 14;
  const x0 = canvas.width - w - 16;
  const y0 = 16;
  const eta = frame.eta;
  // the gauge saturates at twice the threshold so the crossing sits mid-bar
  const span = eta > 0 && Number.isFinite(eta) ? 2 * eta : Math.max(1, 2 * frame.window_sum);
  const fill = Math.min(frame.window_sum / span, 1);

  ctx.fillStyle = "#20242b";
  ctx.fillRect(x0, y0, w, 2 * h + 22);
  ctx.fillStyle = "#9aa4b2";
  ctx.font = "11px system-ui, sans-serif";
  ctx.fillText(`U ${frame.combined.toFixed(3)}  window ${frame.window_sum.toFixed(3)}`, x0 + 6, y0 + 12);

  ctx.fillStyle = "#30343c";
  ctx.fillRect(x0 + 6, y0 + 18, w - 12, h);
  ctx.fillStyle = fill >= 0.5 ? "#d05c4a" : "#4aa3d0";
  ctx.fillRect(x0 + 6, y0 + 18, (w - 12) * fill, h);
  // threshold marker
  ctx.fillStyle = "#e8e8e8";
  ctx.fillRect(x0 + 6 + (w - 12) * 0.5 - 1, y0 + 16, 2, h + 4);
  if (config !== null) {
    ctx.fillStyle = "#9aa4b2";
    ctx.fillText(`eta ${eta.toPrecision(3)}`, x0 + 6, y0 + 18 + h + 12);
  }
}

export function render(
  canvas: HTMLCanvasElement,
  ctx: CanvasRenderingContext2D,
  session: ClientSession,
): void {
  ctx.fillStyle = "#14161a";
  ctx.fillRect(0, 0, canvas.width, canvas.height);

  const frame = session.lastFrame;
  const geometry = session.currentTrack();
  if (frame === null || geometry === null) {
    ctx.fillStyle = "#9aa4b2";
    ctx.font = "14px system-ui, sans-serif";
    ctx.fillText("waiting for session...", 24, 32);
    return;
  }

  const cam: Camera = { cx: frame.x, cy: frame.y, scale: 9 };
  drawTrack(ctx, canvas, cam, geometry);
  drawEgo(ctx, canvas, cam, frame, session.bannerVisible());
  drawGauge(ctx, canvas, frame, session.config);

  ctx.font = "12px system-ui, sans-serif";
  ctx.fillStyle = "#9aa4b2";
  ctx.fillText(
    `episode ${frame.episode}  tick ${frame.sim_tick}  v ${frame.speed.toFixed(2)} m/s  ${frame.command}`,
    16,
    canvas.height - 16,
  );

  if (session.bannerVisible()) {
    ctx.fillStyle = "rgba(208, 92, 74, 0.92)";
    ctx.fillRect(0, 0, canvas.width, 38);
    ctx.fillStyle = "#fff";
    ctx.font = "bold 16px system-ui, sans-serif";
    ctx.fillText("TAKE OVER - you are driving", 16, 25);
  }
  if (session.infractionFlash !== null) {
    ctx.fillStyle = "#d05c4a";
    ctx.font = "bold 14px system-ui, sans-serif";
    ctx.fillText(`infraction: ${session.infractionFlash}`, 16, 56);
  }

  const overlay = session.overlay();
  if (overlay !== null) {
    ctx.fillStyle = "rgba(10, 12, 15, 0.72)";
    ctx.fillRect(0, 0, canvas.width, canvas.height);
    ctx.fillStyle = "#e8e8e8";
    ctx.font = "bold 22px system-ui, sans-serif";
    const label =
      overlay === "paused"
        ? "paused - input went stale"
        : overlay === "ended"
          ? `session ended (${session.end?.reason ?? ""})`
          : session.errors[session.errors.length - 1] ?? "error";
    ctx.fillText(label, canvas.width / 2 - ctx.measureText(label).width / 2, canvas.height / 2);
  }
}

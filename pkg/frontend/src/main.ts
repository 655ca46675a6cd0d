/**
 * Dashboard entry point: socket wiring, latest-frame slot, render loop.
 *
 * The socket handler only updates the view model; a requestAnimationFrame
 * loop renders the latest state.  Frames arriving faster than the display
 * can draw simply overwrite the slot (no client-side extrapolation, ever).
 */

import { command, parseMessage, ProtocolError } from "./protocol.js";
import { metricsText, render } from "./render.js";
import { Sparkline } from "./sparkline.js";
import {
  controlsEnabled,
  initialViewModel,
  reduce,
  ViewEvent,
  ViewModel,
} from "./viewmodel.js";

const $ = (id: string) => document.getElementById(id)!;

let vm: ViewModel = initialViewModel();
let dirty = true;
const sparkline = new Sparkline();

function dispatch(ev: ViewEvent): void {
  vm = reduce(vm, ev);
  dirty = true;
}

const ws = new WebSocket(`ws://${location.host}/ws`);

ws.onmessage = (event) => {
  let msg;
  try {
    msg = parseMessage(String(event.data));
  } catch (e) {
    if (e instanceof ProtocolError) {
      dispatch({ type: "server", msg: { kind: "error", v: 1, message: e.message } });
      return;
    }
    throw e;
  }
  if (msg.kind === "frame" && vm.frame && msg.t < vm.frame.t) {
    return; // stale frame: drop, never render backwards
  }
  dispatch({ type: "server", msg });
  if (msg.kind === "frame") {
    sparkline.push(msg.metrics.queue);
  }
  if (msg.kind === "geometry") {
    populateSelectors();
  }
  if (msg.kind === "ack") {
    ($("status") as HTMLElement).textContent =
      `ack ${msg.cmd} @ t=${msg.applied_at_t.toFixed(0)}s`;
  }
};

ws.onclose = () => dispatch({ type: "closed" });

function send(cmd: Parameters<typeof command>[0], value?: number | string) {
  ws.send(JSON.stringify(command(cmd, value)));
}

// --- controls ---------------------------------------------------------------

function populateSelectors(): void {
  const geo = vm.geometry;
  if (!geo) return;
  const fill = (el: HTMLSelectElement, items: string[], current: string) => {
    el.innerHTML = "";
    for (const name of items) {
      const opt = document.createElement("option");
      opt.value = name;
      opt.textContent = name;
      opt.selected = name === current;
      el.appendChild(opt);
    }
  };
  fill($("controller") as HTMLSelectElement, geo.controllers ?? [],
       vm.control.controller);
  fill($("scenario") as HTMLSelectElement, geo.scenarios ?? [],
       vm.control.scenario);
}

$("pause").addEventListener("click", () => {
  const pausing = !vm.control.paused;
  dispatch({ type: "intent", field: "paused", value: pausing });
  send(pausing ? "pause" : "resume");
});

$("speed").addEventListener("input", (e) => {
  const value = Number((e.target as HTMLInputElement).value);
  const speed = Math.pow(10, value); // slider is log-scale: 0.1x .. 1000x
  dispatch({ type: "intent", field: "speed", value: speed });
  send("set_speed", speed);
});

$("controller").addEventListener("change", (e) => {
  const name = (e.target as HTMLSelectElement).value;
  dispatch({ type: "intent", field: "controller", value: name });
  send("set_controller", name);
});

$("scenario").addEventListener("change", (e) => {
  const name = (e.target as HTMLSelectElement).value;
  dispatch({ type: "intent", field: "scenario", value: name });
  send("set_scenario", name);
});

$("reset").addEventListener("click", () => send("reset"));

// --- render loop -------------------------------------------------------------

const canvas = $("canvas") as HTMLCanvasElement;
const spark = $("spark") as HTMLCanvasElement;

function paint(): void {
  requestAnimationFrame(paint);
  if (!dirty) return;
  dirty = false;

  const ctx = canvas.getContext("2d")!;
  if (vm.geometry) {
    render(ctx, canvas.width, canvas.height, vm.geometry, vm.frame);
  }
  sparkline.draw(spark.getContext("2d")!, spark.width, spark.height);

  ($("metrics") as HTMLElement).textContent = metricsText(vm.frame);
  ($("mode") as HTMLElement).textContent =
    `${vm.control.scenario} — ${vm.status}` +
    (vm.status === "live" ? ` — ${vm.control.controller}` : "");
  ($("pause") as HTMLButtonElement).textContent =
    vm.control.paused ? "resume" : "pause";
  ($("speedLabel") as HTMLElement).textContent =
    `${vm.control.speed >= 10 ? vm.control.speed.toFixed(0) : vm.control.speed.toFixed(1)}×`;

  const enabled = controlsEnabled(vm);
  ($("pause") as HTMLButtonElement).disabled = !enabled.pause;
  ($("speed") as HTMLInputElement).disabled = !enabled.speed;
  ($("controller") as HTMLSelectElement).disabled = !enabled.controller;
  ($("scenario") as HTMLSelectElement).disabled = !enabled.scenario;
  ($("reset") as HTMLButtonElement).disabled = vm.status !== "live";

  const banner = $("banner") as HTMLElement;
  banner.textContent = vm.banner ?? "";
  banner.style.display = vm.banner ? "block" : "none";

  const toast = $("toast") as HTMLElement;
  toast.textContent = vm.toast ?? "";
  toast.style.display = vm.toast ? "block" : "none";
}

requestAnimationFrame(paint);

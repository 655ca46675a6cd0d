/**
 * Client state as a pure reducer: (ViewModel, event) -> ViewModel.
 *
 * The view renders only from this state, so replaying the same message
 * sequence reproduces the same view.  Control widgets are optimistic: a
 * user intent applies immediately and is rolled back if the server answers
 * with an error.
 */

import {
  AckMsg,
  ErrorMsg,
  FrameMsg,
  GeometryMsg,
  ServerMsg,
  frameMatchesGeometry,
} from "./protocol.js";

export interface ControlState {
  paused: boolean;
  speed: number;
  controller: string;
  scenario: string;
}

export interface ViewModel {
  status: "connecting" | "live" | "replay" | "ended" | "closed";
  geometry: GeometryMsg | null;
  frame: FrameMsg | null;
  control: ControlState;
  /** Last optimistic change, undone if the next ack is an error. */
  pending: { field: keyof ControlState; previous: unknown } | null;
  banner: string | null; // persistent error banner (e.g. frame mismatch)
  toast: string | null;  // transient server rejection
  framesSeen: number;
  framesDropped: number;
}

export function initialViewModel(): ViewModel {
  return {
    status: "connecting",
    geometry: null,
    frame: null,
    control: { paused: false, speed: 1, controller: "", scenario: "" },
    pending: null,
    banner: null,
    toast: null,
    framesSeen: 0,
    framesDropped: 0,
  };
}

export type ViewEvent =
  | { type: "server"; msg: ServerMsg }
  | { type: "intent"; field: keyof ControlState; value: unknown }
  | { type: "closed" };

export function reduce(vm: ViewModel, ev: ViewEvent): ViewModel {
  switch (ev.type) {
    case "closed":
      return { ...vm, status: "closed" };
    case "intent": {
      // Optimistic: reflect immediately, remember how to roll back.
      const previous = vm.control[ev.field];
      const control = { ...vm.control, [ev.field]: ev.value };
      return { ...vm, control, pending: { field: ev.field, previous }, toast: null };
    }
    case "server":
      return reduceServer(vm, ev.msg);
  }
}

function reduceServer(vm: ViewModel, msg: ServerMsg): ViewModel {
  switch (msg.kind) {
    case "geometry": {
      const control: ControlState = {
        paused: msg.paused ?? false,
        speed: msg.speed ?? 1,
        controller: msg.controller ?? "",
        scenario: msg.scenario,
      };
      return {
        ...vm,
        status: msg.mode === "replay" ? "replay" : "live",
        geometry: msg,
        frame: null, // stale frames from an old network must not render
        control,
        banner: null,
      };
    }
    case "frame": {
      if (!vm.geometry) {
        // Renders only after geometry: drop silently but count it.
        return { ...vm, framesDropped: vm.framesDropped + 1 };
      }
      if (!frameMatchesGeometry(msg, vm.geometry)) {
        return {
          ...vm,
          framesDropped: vm.framesDropped + 1,
          banner: `frame/geometry mismatch: frame has ${msg.densities.length} cells, network has ${vm.geometry.n_cells}`,
        };
      }
      return { ...vm, frame: msg, framesSeen: vm.framesSeen + 1 };
    }
    case "ack": {
      // Confirmed: drop the rollback point.
      return { ...vm, pending: null };
    }
    case "error": {
      let control = vm.control;
      if (vm.pending) {
        control = { ...vm.control, [vm.pending.field]: vm.pending.previous };
      }
      return { ...vm, control, pending: null, toast: msg.message };
    }
    case "end":
      return { ...vm, status: "ended" };
  }
}

/** Widgets available in the current mode (replay cannot be steered). */
export function controlsEnabled(vm: ViewModel): {
  pause: boolean;
  speed: boolean;
  controller: boolean;
  scenario: boolean;
} {
  const live = vm.status === "live";
  const playing = live || vm.status === "replay";
  return {
    pause: playing,
    speed: playing,
    controller: live,
    scenario: live,
  };
}

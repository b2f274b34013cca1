// Maps held keys and gamepad state to an action vector in [-1, 1]^d.
//
// Rules: a keyboard source contributes its scale while held; a gamepad
// axis passes through its deadzone and is rescaled so full deflection
// still reaches |scale|; a gamepad button contributes value * scale.
// Several sources bound to one action axis sum and the sum clips to
// [-1, 1]. Action axes with no binding stay at 0 and are reported so
// the UI can warn about them.

export type BindingSource =
  | { kind: "key"; code: string }
  | { kind: "axis"; index: number }
  | { kind: "button"; index: number };

export interface BindingTarget {
  instrument: number;
  axis: number;
}

export interface InputBinding {
  source: BindingSource;
  target: BindingTarget;
  scale: number; // in [-1, 1]
  deadzone: number; // in [0, 1), applies to gamepad axes
}

export interface GamepadState {
  axes: number[];
  buttons: number[]; // analog values in [0, 1]
}

export interface ActionLayout {
  instruments: number;
  axesPerInstrument: number;
}

export interface MappedAction {
  action: number[];
  unboundAxes: number[]; // flat action indices with no binding at all
}

export class BindingError extends Error {}

function sourceKey(source: BindingSource): string {
  switch (source.kind) {
    case "key":
      return `key:${source.code}`;
    case "axis":
      return `axis:${source.index}`;
    case "button":
      return `button:${source.index}`;
  }
}

export function validateBindings(bindings: InputBinding[]): void {
  const seen = new Set<string>();
  for (const binding of bindings) {
    const key = sourceKey(binding.source);
    if (seen.has(key)) {
      throw new BindingError(`source ${key} is bound more than once`);
    }
    seen.add(key);
    if (!(Math.abs(binding.scale) <= 1)) {
      throw new BindingError(`scale ${binding.scale} outside [-1, 1]`);
    }
    if (!(binding.deadzone >= 0 && binding.deadzone < 1)) {
      throw new BindingError(`deadzone ${binding.deadzone} outside [0, 1)`);
    }
    if (
      !Number.isInteger(binding.target.instrument) ||
      binding.target.instrument < 0 ||
      !Number.isInteger(binding.target.axis) ||
      binding.target.axis < 0
    ) {
      throw new BindingError(`invalid target ${JSON.stringify(binding.target)}`);
    }
  }
}

function applyDeadzone(value: number, deadzone: number): number {
  const magnitude = Math.abs(value);
  if (magnitude <= deadzone) {
    return 0;
  }
  const rescaled = (magnitude - deadzone) / (1 - deadzone);
  return Math.sign(value) * Math.min(rescaled, 1);
}

function sourceValue(
  source: BindingSource,
  heldKeys: ReadonlySet<string>,
  gamepad: GamepadState | null,
  deadzone: number,
): number {
  switch (source.kind) {
    case "key":
      return heldKeys.has(source.code) ? 1 : 0;
    case "axis":
      if (gamepad === null || source.index >= gamepad.axes.length) {
        return 0;
      }
      return applyDeadzone(gamepad.axes[source.index], deadzone);
    case "button":
      if (gamepad === null || source.index >= gamepad.buttons.length) {
        return 0;
      }
      return gamepad.buttons[source.index];
  }
}

export function mapInputs(
  heldKeys: ReadonlySet<string>,
  gamepad: GamepadState | null,
  bindings: InputBinding[],
  layout: ActionLayout,
): MappedAction {
  const dim = layout.instruments * layout.axesPerInstrument;
  const action = new Array<number>(dim).fill(0);
  const bound = new Array<boolean>(dim).fill(false);
  for (const binding of bindings) {
    const flat =
      binding.target.instrument * layout.axesPerInstrument + binding.target.axis;
    if (binding.target.axis >= layout.axesPerInstrument || flat >= dim) {
      continue; // binding for an axis this environment does not have
    }
    bound[flat] = true;
    const value = sourceValue(binding.source, heldKeys, gamepad, binding.deadzone);
    action[flat] += value * binding.scale;
  }
  for (let i = 0; i < dim; i++) {
    action[i] = Math.max(-1, Math.min(1, action[i]));
  }
  const unboundAxes: number[] = [];
  for (let i = 0; i < dim; i++) {
    if (!bound[i]) {
      unboundAxes.push(i);
    }
  }
  return { action, unboundAxes };
}

function keyPair(
  instrument: number,
  axis: number,
  positive: string,
  negative: string,
): InputBinding[] {
  return [
    { source: { kind: "key", code: positive }, target: { instrument, axis }, scale: 1, deadzone: 0 },
    { source: { kind: "key", code: negative }, target: { instrument, axis }, scale: -1, deadzone: 0 },
  ];
}

// Default table: WASD/QE/RF drive instrument 0, IJKL/UO/YH drive
// instrument 1, and the first four gamepad sticks mirror instrument 0.
export function defaultBindings(): InputBinding[] {
  const bindings: InputBinding[] = [
    ...keyPair(0, 0, "KeyW", "KeyS"),
    ...keyPair(0, 1, "KeyD", "KeyA"),
    ...keyPair(0, 2, "KeyE", "KeyQ"),
    ...keyPair(0, 3, "KeyR", "KeyF"),
    ...keyPair(1, 0, "KeyI", "KeyK"),
    ...keyPair(1, 1, "KeyL", "KeyJ"),
    ...keyPair(1, 2, "KeyO", "KeyU"),
    ...keyPair(1, 3, "KeyY", "KeyH"),
  ];
  for (let axis = 0; axis < 4; axis++) {
    bindings.push({
      source: { kind: "axis", index: axis },
      target: { instrument: 0, axis },
      scale: 1,
      deadzone: 0.15,
    });
  }
  return bindings;
}

// Persistence: bindings round-trip through JSON in browser local
// storage (or any object with the same getItem/setItem surface).

export interface BindingStorage {
  getItem(key: string): string | null;
  setItem(key: string, value: string): void;
}

export const BINDINGS_STORAGE_KEY = "lapkit-teleop-bindings";

export function saveBindings(storage: BindingStorage, bindings: InputBinding[]): void {
  validateBindings(bindings);
  storage.setItem(BINDINGS_STORAGE_KEY, JSON.stringify(bindings));
}

export function loadBindings(storage: BindingStorage): InputBinding[] {
  const text = storage.getItem(BINDINGS_STORAGE_KEY);
  if (text === null) {
    return defaultBindings();
  }
  let parsed: unknown;
  try {
    parsed = JSON.parse(text);
  } catch {
    return defaultBindings();
  }
  if (!Array.isArray(parsed)) {
    return defaultBindings();
  }
  const bindings = parsed as InputBinding[];
  try {
    validateBindings(bindings);
  } catch {
    return defaultBindings();
  }
  return bindings;
}

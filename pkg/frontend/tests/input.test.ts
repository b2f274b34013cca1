import { describe, expect, it } from "vitest";
import {
  BINDINGS_STORAGE_KEY,
  BindingError,
  BindingStorage,
  InputBinding,
  defaultBindings,
  loadBindings,
  mapInputs,
  saveBindings,
  validateBindings,
} from "../src/input.js";

const LAYOUT = { instruments: 1, axesPerInstrument: 4 };

function keyBinding(code: string, axis: number, scale = 1): InputBinding {
  return { source: { kind: "key", code }, target: { instrument: 0, axis }, scale, deadzone: 0 };
}

function axisBinding(index: number, axis: number, deadzone = 0, scale = 1): InputBinding {
  return { source: { kind: "axis", index }, target: { instrument: 0, axis }, scale, deadzone };
}

describe("mapInputs", () => {
  it("maps no input to the zero vector", () => {
    const { action } = mapInputs(new Set(), null, defaultBindings(), LAYOUT);
    expect(action).toEqual([0, 0, 0, 0]);
  });

  it("holds a keyboard source at its scale", () => {
    const bindings = [keyBinding("KeyW", 0), keyBinding("KeyS", 0, -1), keyBinding("KeyD", 1, 0.5)];
    const { action } = mapInputs(new Set(["KeyW", "KeyD"]), null, bindings, LAYOUT);
    expect(action[0]).toBe(1);
    expect(action[1]).toBe(0.5);
  });

  it("zeroes gamepad axes inside the deadzone", () => {
    const bindings = [axisBinding(0, 0, 0.1)];
    const pad = { axes: [0.05], buttons: [] };
    const { action } = mapInputs(new Set(), pad, bindings, LAYOUT);
    expect(action[0]).toBe(0);
  });

  it("rescales past the deadzone so full deflection reaches the scale", () => {
    const bindings = [axisBinding(0, 0, 0.2)];
    const full = mapInputs(new Set(), { axes: [1], buttons: [] }, bindings, LAYOUT);
    expect(full.action[0]).toBeCloseTo(1, 12);
    const mid = mapInputs(new Set(), { axes: [0.6], buttons: [] }, bindings, LAYOUT);
    expect(mid.action[0]).toBeCloseTo(0.5, 12);
    const neg = mapInputs(new Set(), { axes: [-1], buttons: [] }, bindings, LAYOUT);
    expect(neg.action[0]).toBeCloseTo(-1, 12);
  });

  it("sums conflicting sources on one axis then clips", () => {
    const bindings = [keyBinding("KeyW", 0), axisBinding(0, 0)];
    const both = mapInputs(new Set(["KeyW"]), { axes: [-0.4], buttons: [] }, bindings, LAYOUT);
    expect(both.action[0]).toBeCloseTo(0.6, 12);
    const saturated = mapInputs(new Set(["KeyW"]), { axes: [0.9], buttons: [] }, bindings, LAYOUT);
    expect(saturated.action[0]).toBe(1);
  });

  it("passes gamepad button values through the scale", () => {
    const bindings: InputBinding[] = [
      { source: { kind: "button", index: 2 }, target: { instrument: 0, axis: 3 }, scale: -1, deadzone: 0 },
    ];
    const { action } = mapInputs(new Set(), { axes: [], buttons: [0, 0, 0.75] }, bindings, LAYOUT);
    expect(action[3]).toBe(-0.75);
  });

  it("reports unbound action axes and holds them at zero", () => {
    const bindings = [keyBinding("KeyW", 0)];
    const { action, unboundAxes } = mapInputs(new Set(), null, bindings, LAYOUT);
    expect(action).toEqual([0, 0, 0, 0]);
    expect(unboundAxes).toEqual([1, 2, 3]);
  });

  it("ignores bindings that target axes the layout does not have", () => {
    const bindings = defaultBindings(); // includes depth and instrument-1 rows
    const { action } = mapInputs(new Set(["KeyR", "KeyI"]), null, bindings, {
      instruments: 1,
      axesPerInstrument: 3,
    });
    expect(action).toEqual([0, 0, 0]);
  });

  it("flattens the second instrument after the first", () => {
    const bindings = defaultBindings();
    const { action } = mapInputs(new Set(["KeyI"]), null, bindings, {
      instruments: 2,
      axesPerInstrument: 4,
    });
    expect(action[4]).toBe(1);
    expect(action.slice(0, 4)).toEqual([0, 0, 0, 0]);
  });
});

describe("binding validation", () => {
  it("accepts the default table", () => {
    expect(() => validateBindings(defaultBindings())).not.toThrow();
  });

  it("rejects a source bound twice", () => {
    const bindings = [keyBinding("KeyW", 0), keyBinding("KeyW", 1)];
    expect(() => validateBindings(bindings)).toThrow(BindingError);
  });

  it("rejects out-of-range scale and deadzone", () => {
    expect(() => validateBindings([keyBinding("KeyW", 0, 1.5)])).toThrow(BindingError);
    expect(() => validateBindings([axisBinding(0, 0, 1.0)])).toThrow(BindingError);
    expect(() => validateBindings([axisBinding(0, 0, -0.1)])).toThrow(BindingError);
  });
});

describe("binding persistence", () => {
  function memoryStorage(): BindingStorage & { data: Map<string, string> } {
    const data = new Map<string, string>();
    return {
      data,
      getItem: (k) => data.get(k) ?? null,
      setItem: (k, v) => void data.set(k, v),
    };
  }

  it("round-trips bindings through JSON storage", () => {
    const storage = memoryStorage();
    const bindings = [keyBinding("KeyZ", 2, -0.5), axisBinding(1, 3, 0.25)];
    saveBindings(storage, bindings);
    expect(loadBindings(storage)).toEqual(bindings);
  });

  it("falls back to defaults when storage is empty or corrupt", () => {
    const storage = memoryStorage();
    expect(loadBindings(storage)).toEqual(defaultBindings());
    storage.data.set(BINDINGS_STORAGE_KEY, "{not json");
    expect(loadBindings(storage)).toEqual(defaultBindings());
    storage.data.set(BINDINGS_STORAGE_KEY, JSON.stringify([keyBinding("KeyW", 0, 9)]));
    expect(loadBindings(storage)).toEqual(defaultBindings());
  });

  it("refuses to save an invalid table", () => {
    const storage = memoryStorage();
    expect(() => saveBindings(storage, [keyBinding("KeyW", 0), keyBinding("KeyW", 1)])).toThrow(
      BindingError,
    );
    expect(storage.data.size).toBe(0);
  });
});

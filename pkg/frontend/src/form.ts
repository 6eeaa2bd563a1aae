import type { Api, JobHandle, PresetInfo, RunRequest } from "./api.js";
import { canLaunch, initialState } from "./state.js";
import { el } from "./render.js";

export interface FormHooks {
  onLaunched: (handle: JobHandle) => void;
  onError?: (message: string) => void;
}

const ARM_MODES = ["adaptive", "hard"];

/**
 * Build the run form inside `root` and wire it to the API. The Run button
 * stays disabled while the custom-source section is enabled but nothing has
 * been uploaded yet; a failed upload keeps it disabled.
 */
export function mountRunForm(root: HTMLElement, api: Api, presets: PresetInfo[], hooks: FormHooks) {
  const state = initialState();
  state.preset = presets.length > 0 ? presets[0].name : null;
  let customName = "";
  let customFile: File | null = null;
  const uploadedNames: string[] = [];

  const form = el("form", { class: "run-form" });
  form.addEventListener("submit", (event) => event.preventDefault());

  const presetSelect = el("select", { id: "preset" }) as HTMLSelectElement;
  for (const preset of presets) {
    presetSelect.appendChild(
      el("option", { value: preset.name }, `${preset.name} (${preset.dataset_size} questions)`)
    );
  }
  presetSelect.addEventListener("change", () => {
    state.preset = presetSelect.value || null;
    updateGate();
  });
  const presetLabel = el("label", {}, "preset ");
  presetLabel.appendChild(presetSelect);
  form.appendChild(presetLabel);

  const armsBox = el("div", { class: "arms" });
  const armInputs: HTMLInputElement[] = [];
  for (const mode of ARM_MODES) {
    const input = el("input", {
      type: "checkbox",
      id: `arm-${mode}`,
      value: mode,
    }) as HTMLInputElement;
    input.checked = state.arms.includes(mode);
    input.addEventListener("change", () => {
      state.arms = armInputs.filter((i) => i.checked).map((i) => i.value);
      updateGate();
    });
    armInputs.push(input);
    const label = el("label", {}, ` ${mode}`);
    label.prepend(input);
    armsBox.appendChild(label);
  }
  form.appendChild(armsBox);

  const sampleInput = el("input", {
    type: "number",
    id: "sample-size",
    min: "1",
    value: String(state.sampleSize),
  }) as HTMLInputElement;
  sampleInput.addEventListener("change", () => {
    state.sampleSize = Math.max(1, Number(sampleInput.value) || 1);
  });
  const sampleLabel = el("label", {}, "sample size ");
  sampleLabel.appendChild(sampleInput);
  form.appendChild(sampleLabel);

  const custom = el("fieldset", { class: "custom-source" });
  custom.appendChild(el("legend", {}, "custom source"));
  const enable = el("input", { type: "checkbox", id: "custom-enabled" }) as HTMLInputElement;
  const enableLabel = el("label", {}, " add a custom source");
  enableLabel.prepend(enable);
  custom.appendChild(enableLabel);

  const nameInput = el("input", { type: "text", id: "custom-name", placeholder: "name" }) as HTMLInputElement;
  const profileInput = el("input", {
    type: "text",
    id: "custom-profile",
    placeholder: "one-line profile",
  }) as HTMLInputElement;
  const fileInput = el("input", { type: "file", id: "custom-file" }) as HTMLInputElement;
  const formatSelect = el("select", { id: "custom-format" }) as HTMLSelectElement;
  formatSelect.appendChild(el("option", { value: "json" }, "json"));
  formatSelect.appendChild(el("option", { value: "csv" }, "csv"));
  const uploadButton = el("button", { type: "button", id: "upload" }, "Upload") as HTMLButtonElement;
  const uploadStatus = el("span", { class: "upload-status" });
  for (const node of [nameInput, profileInput, fileInput, formatSelect, uploadButton, uploadStatus]) {
    custom.appendChild(node);
  }
  form.appendChild(custom);

  enable.addEventListener("change", () => {
    state.customEnabled = enable.checked;
    updateGate();
  });
  nameInput.addEventListener("input", () => {
    customName = nameInput.value.trim();
  });
  fileInput.addEventListener("change", () => {
    customFile = fileInput.files && fileInput.files.length > 0 ? fileInput.files[0] : null;
  });

  uploadButton.addEventListener("click", async () => {
    if (customFile === null || customName === "") {
      uploadStatus.textContent = "pick a file and a source name first";
      return;
    }
    uploadStatus.textContent = "uploading...";
    try {
      const registered = await api.uploadSource(
        customFile,
        customName,
        profileInput.value,
        formatSelect.value
      );
      uploadedNames.push(registered.name);
      state.customUploaded = true;
      uploadStatus.textContent = `uploaded ${registered.name}: ${registered.document_count} documents`;
    } catch (err) {
      state.customUploaded = false;
      uploadStatus.textContent = err instanceof Error ? err.message : String(err);
      hooks.onError?.(uploadStatus.textContent);
    }
    updateGate();
  });

  const runButton = el("button", { type: "button", id: "run" }, "Run comparison") as HTMLButtonElement;
  runButton.addEventListener("click", async () => {
    const preset = presets.find((p) => p.name === state.preset);
    if (preset === undefined) {
      return;
    }
    const body: RunRequest = {
      preset: preset.name,
      sample_size: Math.min(state.sampleSize, preset.dataset_size),
      arms: state.arms.map((mode) => ({ name: mode, mode })),
    };
    if (uploadedNames.length > 0) {
      // include the preset's own sources, then anything uploaded here
      body.sources = [...preset.sources.map((s) => s.name), ...uploadedNames];
    }
    runButton.disabled = true;
    try {
      hooks.onLaunched(await api.startRun(body));
    } catch (err) {
      hooks.onError?.(err instanceof Error ? err.message : String(err));
    }
    updateGate();
  });
  form.appendChild(runButton);

  function updateGate() {
    runButton.disabled = !canLaunch(state);
  }

  updateGate();
  root.appendChild(form);
  return { state };
}

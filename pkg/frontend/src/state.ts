import type { Api, JobHandle } from "./api.js";

export interface RunFormState {
  preset: string | null;
  arms: string[];
  sampleSize: number;
  customEnabled: boolean;
  customUploaded: boolean;
}

export function initialState(): RunFormState {
  return {
    preset: null,
    arms: ["adaptive", "hard"],
    sampleSize: 5,
    customEnabled: false,
    customUploaded: false,
  };
}

/**
 * Whether the Run button should be live. A run needs a preset and at least
 * one arm; an enabled custom source blocks launching until its upload has
 * actually succeeded, so a run can never reference a source the service
 * does not have.
 */
export function canLaunch(state: RunFormState): boolean {
  if (state.preset === null || state.arms.length === 0) {
    return false;
  }
  if (state.customEnabled && !state.customUploaded) {
    return false;
  }
  return true;
}

/** Poll a run until it reaches a terminal state; resolves with the final handle. */
export function pollRun(
  api: Api,
  id: string,
  onProgress: (handle: JobHandle) => void,
  intervalMs = 500
): Promise<JobHandle> {
  return new Promise((resolve, reject) => {
    const timer = setInterval(async () => {
      let handle: JobHandle;
      try {
        handle = await api.getRun(id);
      } catch (err) {
        clearInterval(timer);
        reject(err);
        return;
      }
      onProgress(handle);
      if (handle.state === "done") {
        clearInterval(timer);
        resolve(handle);
      } else if (handle.state === "failed") {
        clearInterval(timer);
        reject(new Error(handle.error ?? "run failed"));
      }
    }, intervalMs);
  });
}

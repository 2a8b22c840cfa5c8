import {
  fetchCommittedMask,
  fetchImage,
  fetchSrMask,
  listImages,
  submitMask,
  type ImageInfo,
} from "./api.js";
import { CanvasEditor } from "./editor.js";
import { MaskState } from "./maskState.js";
import { encodeGrayPng } from "./png.js";

const listEl = document.getElementById("image-list") as HTMLUListElement;
const bannerEl = document.getElementById("banner") as HTMLDivElement;
const toastEl = document.getElementById("toast") as HTMLDivElement;
const editorWrap = document.getElementById("editor") as HTMLDivElement;
const canvas = document.getElementById("paint-canvas") as HTMLCanvasElement;
const brushInput = document.getElementById("brush-size") as HTMLInputElement;
const eraseToggle = document.getElementById("erase-toggle") as HTMLInputElement;
const clearBtn = document.getElementById("clear-btn") as HTMLButtonElement;
const exportBtn = document.getElementById("export-btn") as HTMLButtonElement;
const reloadBtn = document.getElementById("reload-btn") as HTMLButtonElement;
const statusEl = document.getElementById("paint-status") as HTMLSpanElement;

let editor: CanvasEditor | null = null;
let current: ImageInfo | null = null;
let submitting = false;

function toast(message: string, kind: "ok" | "error"): void {
  toastEl.textContent = message;
  toastEl.className = `toast ${kind}`;
  toastEl.style.display = "block";
  setTimeout(() => (toastEl.style.display = "none"), 4000);
}

function badge(status: string): string {
  return status === "committed" ? "✓ committed" : "unannotated";
}

async function refreshList(): Promise<void> {
  let images: ImageInfo[];
  try {
    images = await listImages();
    bannerEl.style.display = "none";
  } catch (err) {
    bannerEl.textContent = `annotation service unreachable: ${err}`;
    bannerEl.style.display = "block";
    return;
  }
  listEl.replaceChildren();
  if (images.length === 0) {
    const empty = document.createElement("li");
    empty.className = "empty";
    empty.textContent = "corpus is empty";
    listEl.append(empty);
    return;
  }
  for (const info of images) {
    const item = document.createElement("li");
    const thumb = document.createElement("img");
    thumb.src = `/api/images/${info.image_id}`;
    thumb.alt = info.image_id;
    const label = document.createElement("span");
    label.textContent = info.image_id;
    const status = document.createElement("em");
    status.textContent = badge(info.status);
    status.className = info.status;
    item.append(thumb, label, status);
    item.addEventListener("click", () => void openImage(info));
    if (current && current.image_id === info.image_id) item.classList.add("active");
    listEl.append(item);
  }
}

function paintStatus(): void {
  if (editor) {
    statusEl.textContent = `${editor.state.paintedCount()} px hidden`;
  }
}

async function openImage(info: ImageInfo): Promise<void> {
  current = info;
  const [bitmap, srMask] = await Promise.all([
    fetchImage(info.image_id),
    fetchSrMask(info.image_id, info.width, info.height),
  ]);
  const state = new MaskState(info.width, info.height, srMask);
  editor = new CanvasEditor(canvas, bitmap, state);
  editor.brushRadius = Number(brushInput.value);
  editor.erasing = eraseToggle.checked;
  editor.onChange = paintStatus;
  editorWrap.style.display = "flex";
  paintStatus();
  void refreshList();
}

async function reloadCommitted(): Promise<void> {
  if (!editor || !current) return;
  const gray = await fetchCommittedMask(current.image_id, current.width, current.height);
  if (gray === null) {
    toast("no committed mask yet for this image", "error");
    return;
  }
  const srMask = await fetchSrMask(current.image_id, current.width, current.height);
  const state = MaskState.fromGrayPixels(current.width, current.height, gray, srMask);
  const bitmap = await fetchImage(current.image_id);
  editor = new CanvasEditor(canvas, bitmap, state);
  editor.brushRadius = Number(brushInput.value);
  editor.erasing = eraseToggle.checked;
  editor.onChange = paintStatus;
  paintStatus();
  toast("committed mask loaded", "ok");
}

async function exportMask(): Promise<void> {
  if (!editor || !current || submitting) return;
  submitting = true;
  exportBtn.disabled = true;
  try {
    const png = encodeGrayPng(
      editor.state.width,
      editor.state.height,
      editor.state.toGrayPixels(),
    );
    const result = await submitMask(current.image_id, png);
    if (result.ok) {
      toast(result.message, "ok");
      await refreshList();
    } else if (result.offendingPixels !== undefined) {
      toast(`${result.message} (${result.offendingPixels} offending pixel(s))`, "error");
    } else {
      toast(result.message, "error");
    }
  } finally {
    submitting = false;
    exportBtn.disabled = false;
  }
}

brushInput.addEventListener("input", () => {
  if (editor) editor.brushRadius = Number(brushInput.value);
});
eraseToggle.addEventListener("change", () => {
  if (editor) editor.erasing = eraseToggle.checked;
});
clearBtn.addEventListener("click", () => editor?.clear());
exportBtn.addEventListener("click", () => void exportMask());
reloadBtn.addEventListener("click", () => void reloadCommitted());

void refreshList();

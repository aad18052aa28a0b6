import { ApiClient } from "./api.js";
import { App } from "./app.js";
import { ReviewStore } from "./store.js";

const api = new ApiClient("");
const store = new ReviewStore(api);
const root = document.getElementById("app");
if (!root) throw new Error("missing #app mount point");
void new App(root, api, store).start();

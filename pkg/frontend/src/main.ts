/**
 * Entry point. The page is normally served by `ontoevent refine serve --ui`,
 * so the API lives on the same origin; `?api=<url>` overrides for development.
 */

import { SessionApi } from "./api.js";
import { SessionController } from "./controller.js";
import { DomView, wire } from "./dom.js";

const params = new URLSearchParams(window.location.search);
const base = params.get("api") ?? window.location.origin;

const controller = new SessionController(new SessionApi(base), new DomView());
wire(controller);
void controller.start();

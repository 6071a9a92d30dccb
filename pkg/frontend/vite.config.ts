/// <reference types="vitest/config" />
import { defineConfig } from "vite";

export default defineConfig({
  test: {
    environment: "node",
    globalSetup: "./tests/globalSetup.ts",
    testTimeout: 900_000,
    hookTimeout: 600_000,
    fileParallelism: false,
  },
});

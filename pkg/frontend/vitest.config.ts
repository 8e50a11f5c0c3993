import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["tests/**/*.test.ts"],
    environment: "node",
    testTimeout: 30_000,
    hookTimeout: 90_000,
    // The integration suite drives one shared server process; single-thread
    // keeps its steps ordered without cross-file interference.
    fileParallelism: false,
  },
});

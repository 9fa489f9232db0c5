import { defineConfig } from "vitest/config";

export default defineConfig({
  test: {
    include: ["e2e/**/*.e2e.ts"],
    environment: "node",
    // spawns a real server and steps a real simulation
    testTimeout: 300_000,
    hookTimeout: 120_000,
    fileParallelism: false,
  },
});

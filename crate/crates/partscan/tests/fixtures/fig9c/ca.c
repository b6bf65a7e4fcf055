void run(TEEC_Context ctx, TEEC_Session sess, TEEC_Operation op, uint32_t err_origin)
{
    TEEC_SharedMemory shm;
    shm.size = 4096;
    shm.flags = TEEC_MEM_INPUT | TEEC_MEM_OUTPUT;
    TEEC_AllocateSharedMemory(&ctx, &shm);
    op.params[3].memref.parent = &shm;
    TEEC_InvokeCommand(&sess, 0, &op, &err_origin);
}
